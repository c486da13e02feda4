#include "regdet/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "regdet/nn/blas.hpp"

namespace regdet::nn {

namespace {

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    for (const Var& i : n->inputs) n->needs_grad = n->needs_grad || i->needs_grad;
    if (n->needs_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require<NumericError>(a->value.count() == b->value.count(), "add: shape mismatch");
    Tensor out = a->value.clone();
    axpy(1.0f, b->value, out);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& in = *self.inputs[k];
            if (in.needs_grad) axpy(1.0f, self.grad, ensure_grad(in));
        }
    });
}

Var scale(const Var& a, float s) {
    Tensor out = a->value.clone();
    for (float& v : *out.store) v *= s;
    return make_op(std::move(out), {a}, [s](Node& self) {
        Node& in = *self.inputs[0];
        if (in.needs_grad) axpy(s, self.grad, ensure_grad(in));
    });
}

Var relu(const Var& a) {
    Tensor out = a->value.clone();
    for (float& v : *out.store) v = v > 0.0f ? v : 0.0f;
    return make_op(std::move(out), {a}, [](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* y = self.value.data();
        const float* dy = self.grad.data();
        float* dx = g.data();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            if (y[i] > 0.0f) dx[i] += dy[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value.clone();
    for (float& v : *out.store) v = 1.0f / (1.0f + std::exp(-v));
    return make_op(std::move(out), {a}, [](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* y = self.value.data();
        const float* dy = self.grad.data();
        float* dx = g.data();
        for (std::size_t i = 0; i < self.value.size(); ++i) dx[i] += dy[i] * y[i] * (1.0f - y[i]);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& self) {
        Node& in = *self.inputs[0];
        if (in.needs_grad) axpy(1.0f, self.grad, ensure_grad(in));
    });
}

Var select_rows(const Var& a, std::vector<int> rows) {
    require<NumericError>(a->value.rank() >= 1, "select_rows: rank 0 input");
    const int n = a->value.dim(0);
    const std::size_t stride = a->value.count() / static_cast<std::size_t>(std::max(1, n));
    std::vector<int> out_shape = a->value.shape;
    out_shape[0] = static_cast<int>(rows.size());
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        require<NumericError>(rows[k] >= 0 && rows[k] < n, "select_rows: row out of range");
        std::copy_n(a->value.data() + rows[k] * stride, stride, out.data() + k * stride);
    }
    return make_op(std::move(out), {a}, [rows, stride](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const float* src = self.grad.data() + k * stride;
            float* dst = g.data() + rows[k] * stride;
            for (std::size_t i = 0; i < stride; ++i) dst[i] += src[i];
        }
    });
}

Var gather_flat(const Var& a, std::vector<long> indices) {
    Tensor out = Tensor::zeros({static_cast<int>(indices.size())});
    const float* src = a->value.data();
    const long total = static_cast<long>(a->value.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        require<NumericError>(indices[k] >= 0 && indices[k] < total,
                              "gather_flat: index out of range");
        out.data()[k] = src[indices[k]];
    }
    return make_op(std::move(out), {a}, [indices](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* dy = self.grad.data();
        for (std::size_t k = 0; k < indices.size(); ++k) g.data()[indices[k]] += dy[k];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    require<NumericError>(!parts.empty(), "concat_rows: no inputs");
    std::vector<int> out_shape = parts[0]->value.shape;
    const std::size_t inner =
        parts[0]->value.count() / static_cast<std::size_t>(std::max(1, out_shape[0]));
    int total_rows = 0;
    for (const Var& p : parts) {
        require<NumericError>(p->value.shape.size() == out_shape.size(),
                              "concat_rows: rank mismatch");
        total_rows += p->value.dim(0);
    }
    out_shape[0] = total_rows;
    Tensor out = Tensor::zeros(out_shape);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::copy_n(p->value.data(), p->value.size(), out.data() + offset);
        offset += p->value.size();
    }
    return make_op(std::move(out), parts, [inner](Node& self) {
        std::size_t offset = 0;
        for (const Var& inp : self.inputs) {
            const std::size_t n = inp->value.size();
            if (inp->needs_grad) {
                Tensor& g = ensure_grad(*inp);
                const float* src = self.grad.data() + offset;
                for (std::size_t i = 0; i < n; ++i) g.data()[i] += src[i];
            }
            offset += n;
        }
        (void)inner;
    });
}

Var sum_scalars(const std::vector<Var>& scalars) {
    require<NumericError>(!scalars.empty(), "sum_scalars: no inputs");
    double total = 0.0;
    for (const Var& s : scalars) total += s->value.item();
    return make_op(Tensor::scalar(static_cast<float>(total)), scalars, [](Node& self) {
        const float g = self.grad.item();
        for (const Var& inp : self.inputs)
            if (inp->needs_grad) ensure_grad(*inp).data()[0] += g;
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require<NumericError>(x->value.rank() == 2 && w->value.rank() == 2, "linear: rank mismatch");
    const int n = x->value.dim(0), k = x->value.dim(1), m = w->value.dim(0);
    require<NumericError>(w->value.dim(1) == k && b->value.count() == static_cast<std::size_t>(m),
                          "linear: shape mismatch");
    Tensor out = Tensor::zeros({n, m});
    if (n > 0) {
        sgemm(false, true, n, m, k, 1.0f, x->value.data(), k, w->value.data(), k, 0.0f,
              out.data(), m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out.data()[i * m + j] += b->value.data()[j];
    }
    return make_op(std::move(out), {x, w, b}, [n, k, m](Node& self) {
        if (n == 0) return;
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const float* dy = self.grad.data();
        if (xn.needs_grad)
            sgemm(false, false, n, k, m, 1.0f, dy, m, wn.value.data(), k, 1.0f,
                  ensure_grad(xn).data(), k);
        if (wn.needs_grad)
            sgemm(true, false, m, k, n, 1.0f, dy, m, xn.value.data(), k, 1.0f,
                  ensure_grad(wn).data(), k);
        if (bn.needs_grad) {
            Tensor& db = ensure_grad(bn);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) db.data()[j] += dy[i * m + j];
        }
    });
}

// --- convolution ------------------------------------------------------------

namespace {

struct Conv2dDims {
    int c, h, w, f, kh, kw, sy, sx, py, px, oh, ow;
    long ck() const { return static_cast<long>(c) * kh * kw; }
    long len() const { return static_cast<long>(oh) * ow; }
};

void im2col2d(const float* x, const Conv2dDims& d, float* cols) {
    for (int c = 0; c < d.c; ++c) {
        const float* xc = x + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                float* row = cols + ((static_cast<long>(c) * d.kh + ky) * d.kw + kx) * d.len();
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int iy = oy * d.sy - d.py + ky;
                    float* out = row + static_cast<long>(oy) * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::fill_n(out, d.ow, 0.0f);
                        continue;
                    }
                    const float* xr = xc + static_cast<long>(iy) * d.w;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * d.sx - d.px + kx;
                        out[ox] = (ix >= 0 && ix < d.w) ? xr[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im2d(const float* cols, const Conv2dDims& d, float* dx) {
    for (int c = 0; c < d.c; ++c) {
        float* xc = dx + static_cast<long>(c) * d.h * d.w;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx) {
                const float* row =
                    cols + ((static_cast<long>(c) * d.kh + ky) * d.kw + kx) * d.len();
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int iy = oy * d.sy - d.py + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    float* xr = xc + static_cast<long>(iy) * d.w;
                    const float* in = row + static_cast<long>(oy) * d.ow;
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * d.sx - d.px + kx;
                        if (ix >= 0 && ix < d.w) xr[ix] += in[ox];
                    }
                }
            }
        }
    }
}

struct Conv3dDims {
    int c, dz, h, w, f, kd, kh, kw, sz, sy, sx, pz, py, px, od, oh, ow;
    long ck() const { return static_cast<long>(c) * kd * kh * kw; }
    long len() const { return static_cast<long>(od) * oh * ow; }
};

void im2col3d(const float* x, const Conv3dDims& d, float* cols) {
    const long plane = static_cast<long>(d.h) * d.w;
    for (int c = 0; c < d.c; ++c) {
        const float* xc = x + static_cast<long>(c) * d.dz * plane;
        for (int kz = 0; kz < d.kd; ++kz)
            for (int ky = 0; ky < d.kh; ++ky)
                for (int kx = 0; kx < d.kw; ++kx) {
                    float* row = cols + (((static_cast<long>(c) * d.kd + kz) * d.kh + ky) * d.kw +
                                         kx) *
                                            d.len();
                    long l = 0;
                    for (int oz = 0; oz < d.od; ++oz) {
                        const int iz = oz * d.sz - d.pz + kz;
                        for (int oy = 0; oy < d.oh; ++oy) {
                            const int iy = oy * d.sy - d.py + ky;
                            for (int ox = 0; ox < d.ow; ++ox, ++l) {
                                const int ix = ox * d.sx - d.px + kx;
                                row[l] = (iz >= 0 && iz < d.dz && iy >= 0 && iy < d.h && ix >= 0 &&
                                          ix < d.w)
                                             ? xc[iz * plane + static_cast<long>(iy) * d.w + ix]
                                             : 0.0f;
                            }
                        }
                    }
                }
    }
}

void col2im3d(const float* cols, const Conv3dDims& d, float* dx) {
    const long plane = static_cast<long>(d.h) * d.w;
    for (int c = 0; c < d.c; ++c) {
        float* xc = dx + static_cast<long>(c) * d.dz * plane;
        for (int kz = 0; kz < d.kd; ++kz)
            for (int ky = 0; ky < d.kh; ++ky)
                for (int kx = 0; kx < d.kw; ++kx) {
                    const float* row =
                        cols +
                        (((static_cast<long>(c) * d.kd + kz) * d.kh + ky) * d.kw + kx) * d.len();
                    long l = 0;
                    for (int oz = 0; oz < d.od; ++oz) {
                        const int iz = oz * d.sz - d.pz + kz;
                        for (int oy = 0; oy < d.oh; ++oy) {
                            const int iy = oy * d.sy - d.py + ky;
                            for (int ox = 0; ox < d.ow; ++ox, ++l) {
                                const int ix = ox * d.sx - d.px + kx;
                                if (iz >= 0 && iz < d.dz && iy >= 0 && iy < d.h && ix >= 0 &&
                                    ix < d.w)
                                    xc[iz * plane + static_cast<long>(iy) * d.w + ix] += row[l];
                            }
                        }
                    }
                }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride_y, int stride_x, int pad_y,
           int pad_x) {
    require<NumericError>(x->value.rank() == 3 && w->value.rank() == 4, "conv2d: rank mismatch");
    Conv2dDims d;
    d.c = x->value.dim(0);
    d.h = x->value.dim(1);
    d.w = x->value.dim(2);
    d.f = w->value.dim(0);
    d.kh = w->value.dim(2);
    d.kw = w->value.dim(3);
    d.sy = stride_y;
    d.sx = stride_x;
    d.py = pad_y;
    d.px = pad_x;
    require<NumericError>(w->value.dim(1) == d.c, "conv2d: channel mismatch");
    d.oh = (d.h + 2 * d.py - d.kh) / d.sy + 1;
    d.ow = (d.w + 2 * d.px - d.kw) / d.sx + 1;
    require<NumericError>(d.oh > 0 && d.ow > 0, "conv2d: empty output (input ", d.h, "x", d.w,
                          ", kernel ", d.kh, "x", d.kw, ")");

    auto cols = std::make_shared<std::vector<float>>(static_cast<std::size_t>(d.ck()) * d.len());
    im2col2d(x->value.data(), d, cols->data());

    Tensor out = Tensor::zeros({d.f, d.oh, d.ow});
    sgemm(false, false, d.f, static_cast<int>(d.len()), static_cast<int>(d.ck()), 1.0f,
          w->value.data(), static_cast<int>(d.ck()), cols->data(), static_cast<int>(d.len()),
          0.0f, out.data(), static_cast<int>(d.len()));
    for (int f = 0; f < d.f; ++f) {
        const float bias = b->value.data()[f];
        float* of = out.data() + static_cast<long>(f) * d.len();
        for (long l = 0; l < d.len(); ++l) of[l] += bias;
    }

    const bool keep_cols = x->needs_grad || w->needs_grad || b->needs_grad;
    return make_op(std::move(out), {x, w, b}, [d, cols = keep_cols ? cols : nullptr](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const float* dy = self.grad.data();
        const int len = static_cast<int>(d.len());
        const int ck = static_cast<int>(d.ck());
        if (wn.needs_grad)
            sgemm(false, true, d.f, ck, len, 1.0f, dy, len, cols->data(), len, 1.0f,
                  ensure_grad(wn).data(), ck);
        if (bn.needs_grad) {
            Tensor& db = ensure_grad(bn);
            for (int f = 0; f < d.f; ++f) {
                double s = 0.0;
                const float* df = dy + static_cast<long>(f) * d.len();
                for (long l = 0; l < d.len(); ++l) s += df[l];
                db.data()[f] += static_cast<float>(s);
            }
        }
        if (xn.needs_grad) {
            std::vector<float> dcols(static_cast<std::size_t>(ck) * len);
            sgemm(true, false, ck, len, d.f, 1.0f, wn.value.data(), ck, dy, len, 0.0f,
                  dcols.data(), len);
            col2im2d(dcols.data(), d, ensure_grad(xn).data());
        }
    });
}

Var conv3d(const Var& x, const Var& w, const Var& b, int stride_z, int stride_y, int stride_x,
           int pad_z, int pad_y, int pad_x) {
    require<NumericError>(x->value.rank() == 4 && w->value.rank() == 5, "conv3d: rank mismatch");
    Conv3dDims d;
    d.c = x->value.dim(0);
    d.dz = x->value.dim(1);
    d.h = x->value.dim(2);
    d.w = x->value.dim(3);
    d.f = w->value.dim(0);
    d.kd = w->value.dim(2);
    d.kh = w->value.dim(3);
    d.kw = w->value.dim(4);
    d.sz = stride_z;
    d.sy = stride_y;
    d.sx = stride_x;
    d.pz = pad_z;
    d.py = pad_y;
    d.px = pad_x;
    require<NumericError>(w->value.dim(1) == d.c, "conv3d: channel mismatch");
    d.od = (d.dz + 2 * d.pz - d.kd) / d.sz + 1;
    d.oh = (d.h + 2 * d.py - d.kh) / d.sy + 1;
    d.ow = (d.w + 2 * d.px - d.kw) / d.sx + 1;
    require<NumericError>(d.od > 0 && d.oh > 0 && d.ow > 0, "conv3d: empty output");

    auto cols = std::make_shared<std::vector<float>>(static_cast<std::size_t>(d.ck()) * d.len());
    im2col3d(x->value.data(), d, cols->data());

    Tensor out = Tensor::zeros({d.f, d.od, d.oh, d.ow});
    sgemm(false, false, d.f, static_cast<int>(d.len()), static_cast<int>(d.ck()), 1.0f,
          w->value.data(), static_cast<int>(d.ck()), cols->data(), static_cast<int>(d.len()),
          0.0f, out.data(), static_cast<int>(d.len()));
    for (int f = 0; f < d.f; ++f) {
        const float bias = b->value.data()[f];
        float* of = out.data() + static_cast<long>(f) * d.len();
        for (long l = 0; l < d.len(); ++l) of[l] += bias;
    }

    const bool keep_cols = x->needs_grad || w->needs_grad || b->needs_grad;
    return make_op(std::move(out), {x, w, b}, [d, cols = keep_cols ? cols : nullptr](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const float* dy = self.grad.data();
        const int len = static_cast<int>(d.len());
        const int ck = static_cast<int>(d.ck());
        if (wn.needs_grad)
            sgemm(false, true, d.f, ck, len, 1.0f, dy, len, cols->data(), len, 1.0f,
                  ensure_grad(wn).data(), ck);
        if (bn.needs_grad) {
            Tensor& db = ensure_grad(bn);
            for (int f = 0; f < d.f; ++f) {
                double s = 0.0;
                const float* df = dy + static_cast<long>(f) * d.len();
                for (long l = 0; l < d.len(); ++l) s += df[l];
                db.data()[f] += static_cast<float>(s);
            }
        }
        if (xn.needs_grad) {
            std::vector<float> dcols(static_cast<std::size_t>(ck) * len);
            sgemm(true, false, ck, len, d.f, 1.0f, wn.value.data(), ck, dy, len, 0.0f,
                  dcols.data(), len);
            col2im3d(dcols.data(), d, ensure_grad(xn).data());
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps) {
    const int c = x->value.dim(0);
    require<NumericError>(groups > 0 && c % groups == 0, "group_norm: channels ", c,
                          " not divisible by groups ", groups);
    const std::size_t spatial = x->value.count() / static_cast<std::size_t>(c);
    const int cpg = c / groups;
    const std::size_t group_elems = static_cast<std::size_t>(cpg) * spatial;

    Tensor xhat = Tensor::zeros(x->value.shape);
    std::vector<float> inv_std(groups);
    const float* xd = x->value.data();
    for (int g = 0; g < groups; ++g) {
        const float* xs = xd + g * group_elems;
        double mean = 0.0;
        for (std::size_t i = 0; i < group_elems; ++i) mean += xs[i];
        mean /= static_cast<double>(group_elems);
        double var = 0.0;
        for (std::size_t i = 0; i < group_elems; ++i) {
            const double dv = xs[i] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(group_elems);
        const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[g] = istd;
        float* xh = xhat.data() + g * group_elems;
        const float fmean = static_cast<float>(mean);
        for (std::size_t i = 0; i < group_elems; ++i) xh[i] = (xs[i] - fmean) * istd;
    }

    Tensor out = Tensor::zeros(x->value.shape);
    for (int ch = 0; ch < c; ++ch) {
        const float gm = gamma->value.data()[ch];
        const float bt = beta->value.data()[ch];
        const float* xh = xhat.data() + ch * spatial;
        float* od = out.data() + ch * spatial;
        for (std::size_t i = 0; i < spatial; ++i) od[i] = gm * xh[i] + bt;
    }

    return make_op(std::move(out), {x, gamma, beta},
                   [xhat, inv_std, groups, cpg, spatial, group_elems, c](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const float* dy = self.grad.data();
        const float* xh = xhat.data();

        if (gn.needs_grad || bn.needs_grad) {
            Tensor& dg = ensure_grad(gn);
            Tensor& db = ensure_grad(bn);
            for (int ch = 0; ch < c; ++ch) {
                double sg = 0.0, sb = 0.0;
                const float* dyc = dy + ch * spatial;
                const float* xhc = xh + ch * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    sg += static_cast<double>(dyc[i]) * xhc[i];
                    sb += dyc[i];
                }
                dg.data()[ch] += static_cast<float>(sg);
                db.data()[ch] += static_cast<float>(sb);
            }
        }
        if (!xn.needs_grad) return;
        Tensor& dx = ensure_grad(xn);
        const float* gamma_data = gn.value.data();
        for (int g = 0; g < groups; ++g) {
            // dxhat for the group, then the standard two-moment correction.
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                const float gm = gamma_data[ch];
                const float* dyc = dy + ch * spatial;
                const float* xhc = xh + ch * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const double dxh = static_cast<double>(dyc[i]) * gm;
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xhc[i];
                }
            }
            const double m = static_cast<double>(group_elems);
            const double mean_dxh = sum_dxh / m;
            const double mean_dxh_xh = sum_dxh_xh / m;
            const float istd = inv_std[g];
            for (int cc = 0; cc < cpg; ++cc) {
                const int ch = g * cpg + cc;
                const float gm = gamma_data[ch];
                const float* dyc = dy + ch * spatial;
                const float* xhc = xh + ch * spatial;
                float* dxc = dx.data() + ch * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const double dxh = static_cast<double>(dyc[i]) * gm;
                    dxc[i] += static_cast<float>(istd * (dxh - mean_dxh - xhc[i] * mean_dxh_xh));
                }
            }
        }
    });
}

Var upsample_to(const Var& x, const std::vector<int>& target) {
    const int rank = x->value.rank();
    require<NumericError>(static_cast<int>(target.size()) == rank - 1,
                          "upsample_to: target rank mismatch");
    std::vector<int> out_shape = x->value.shape;
    for (int a = 0; a < rank - 1; ++a) out_shape[a + 1] = target[a];
    Tensor out = Tensor::zeros(out_shape);

    const int c = x->value.dim(0);
    // Spatial index maps computed once per axis.
    std::vector<std::vector<int>> maps(rank - 1);
    for (int a = 0; a < rank - 1; ++a) {
        const int in_n = x->value.dim(a + 1);
        const int out_n = target[a];
        maps[a].resize(out_n);
        for (int i = 0; i < out_n; ++i)
            maps[a][i] = std::min(in_n - 1, static_cast<int>(static_cast<long>(i) * in_n / out_n));
    }

    auto in_spatial = x->value.count() / static_cast<std::size_t>(c);
    auto out_spatial = out.count() / static_cast<std::size_t>(c);

    std::vector<long> flat_map(out_spatial);
    if (rank == 3) {
        const int iw = x->value.dim(2), ow = target[1], oh = target[0];
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                flat_map[static_cast<long>(y) * ow + xx] =
                    static_cast<long>(maps[0][y]) * iw + maps[1][xx];
    } else {
        require<NumericError>(rank == 4, "upsample_to: expected rank 3 or 4");
        const int ih = x->value.dim(2), iw = x->value.dim(3);
        const int od = target[0], oh = target[1], ow = target[2];
        for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx)
                    flat_map[(static_cast<long>(z) * oh + y) * ow + xx] =
                        (static_cast<long>(maps[0][z]) * ih + maps[1][y]) * iw + maps[2][xx];
    }

    for (int ch = 0; ch < c; ++ch) {
        const float* xs = x->value.data() + ch * in_spatial;
        float* od = out.data() + ch * out_spatial;
        for (std::size_t i = 0; i < out_spatial; ++i) od[i] = xs[flat_map[i]];
    }

    return make_op(std::move(out), {x}, [flat_map, in_spatial, out_spatial, c](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* dy = self.grad.data();
        for (int ch = 0; ch < c; ++ch) {
            float* gs = g.data() + ch * in_spatial;
            const float* dyc = dy + ch * out_spatial;
            for (std::size_t i = 0; i < out_spatial; ++i) gs[flat_map[i]] += dyc[i];
        }
    });
}

// --- RoIAlign ----------------------------------------------------------------

namespace {

struct BilinearTap {
    long idx[4];
    float w[4];
};

// Sample position in pixel-center coordinates, clamped to the valid border.
inline BilinearTap bilinear_tap(double y, double x, int h, int w) {
    y = std::clamp(y, 0.5, h - 0.5) - 0.5;
    x = std::clamp(x, 0.5, w - 0.5) - 0.5;
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const float fy = static_cast<float>(y - y0);
    const float fx = static_cast<float>(x - x0);
    BilinearTap t;
    t.idx[0] = static_cast<long>(y0) * w + x0;
    t.idx[1] = static_cast<long>(y0) * w + x1;
    t.idx[2] = static_cast<long>(y1) * w + x0;
    t.idx[3] = static_cast<long>(y1) * w + x1;
    t.w[0] = (1 - fy) * (1 - fx);
    t.w[1] = (1 - fy) * fx;
    t.w[2] = fy * (1 - fx);
    t.w[3] = fy * fx;
    return t;
}

}  // namespace

Var roi_align2d(const Var& feat, const std::vector<Box>& boxes, int ph, int pw, int sampling) {
    require<NumericError>(feat->value.rank() == 3, "roi_align2d: expected [C, H, W] features");
    const int c = feat->value.dim(0), h = feat->value.dim(1), w = feat->value.dim(2);
    const int r = static_cast<int>(boxes.size());
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out = Tensor::zeros({r, c, ph, pw});

    const int s = std::max(1, sampling);
    const float inv_samples = 1.0f / static_cast<float>(s * s);
    auto taps = std::make_shared<std::vector<BilinearTap>>(
        static_cast<std::size_t>(r) * ph * pw * s * s);

    for (int b = 0; b < r; ++b) {
        const Box& box = boxes[b];
        require<NumericError>(box.extent(0) > 0 && box.extent(1) > 0,
                              "roi_align2d: degenerate box");
        const double bh = box.extent(0) / ph;
        const double bw = box.extent(1) / pw;
        for (int i = 0; i < ph; ++i) {
            for (int j = 0; j < pw; ++j) {
                for (int u = 0; u < s; ++u) {
                    for (int v = 0; v < s; ++v) {
                        const double sy = box.lo[0] + (i + (u + 0.5) / s) * bh;
                        const double sx = box.lo[1] + (j + (v + 0.5) / s) * bw;
                        (*taps)[(((static_cast<std::size_t>(b) * ph + i) * pw + j) * s + u) * s +
                                v] = bilinear_tap(sy, sx, h, w);
                    }
                }
            }
        }
    }

    const float* fd = feat->value.data();
    for (int b = 0; b < r; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const float* fc = fd + ch * plane;
            float* oc = out.data() + (static_cast<std::size_t>(b) * c + ch) *
                                         static_cast<std::size_t>(ph) * pw;
            for (int i = 0; i < ph; ++i) {
                for (int j = 0; j < pw; ++j) {
                    float acc = 0.0f;
                    const std::size_t base =
                        ((static_cast<std::size_t>(b) * ph + i) * pw + j) * s * s;
                    for (int p = 0; p < s * s; ++p) {
                        const BilinearTap& t = (*taps)[base + p];
                        acc += t.w[0] * fc[t.idx[0]] + t.w[1] * fc[t.idx[1]] +
                               t.w[2] * fc[t.idx[2]] + t.w[3] * fc[t.idx[3]];
                    }
                    oc[static_cast<std::size_t>(i) * pw + j] = acc * inv_samples;
                }
            }
        }
    }

    return make_op(std::move(out), {feat},
                   [taps, r, c, ph, pw, s, inv_samples, plane](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* dy = self.grad.data();
        for (int b = 0; b < r; ++b) {
            for (int ch = 0; ch < c; ++ch) {
                float* gc = g.data() + ch * plane;
                const float* dyc = dy + (static_cast<std::size_t>(b) * c + ch) *
                                            static_cast<std::size_t>(ph) * pw;
                for (int i = 0; i < ph; ++i) {
                    for (int j = 0; j < pw; ++j) {
                        const float go = dyc[static_cast<std::size_t>(i) * pw + j] * inv_samples;
                        const std::size_t base =
                            ((static_cast<std::size_t>(b) * ph + i) * pw + j) * s * s;
                        for (int p = 0; p < s * s; ++p) {
                            const BilinearTap& t = (*taps)[base + p];
                            gc[t.idx[0]] += go * t.w[0];
                            gc[t.idx[1]] += go * t.w[1];
                            gc[t.idx[2]] += go * t.w[2];
                            gc[t.idx[3]] += go * t.w[3];
                        }
                    }
                }
            }
        }
    });
}

namespace {

struct TrilinearTap {
    long idx[8];
    float w[8];
};

inline TrilinearTap trilinear_tap(double z, double y, double x, int d, int h, int w) {
    z = std::clamp(z, 0.5, d - 0.5) - 0.5;
    y = std::clamp(y, 0.5, h - 0.5) - 0.5;
    x = std::clamp(x, 0.5, w - 0.5) - 0.5;
    const int z0 = std::min(static_cast<int>(z), d - 1);
    const int y0 = std::min(static_cast<int>(y), h - 1);
    const int x0 = std::min(static_cast<int>(x), w - 1);
    const int z1 = std::min(z0 + 1, d - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const float fz = static_cast<float>(z - z0);
    const float fy = static_cast<float>(y - y0);
    const float fx = static_cast<float>(x - x0);
    TrilinearTap t;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dyy = 0; dyy < 2; ++dyy)
            for (int dxx = 0; dxx < 2; ++dxx, ++k) {
                const int zz = dz ? z1 : z0;
                const int yy = dyy ? y1 : y0;
                const int xx = dxx ? x1 : x0;
                t.idx[k] = (static_cast<long>(zz) * h + yy) * w + xx;
                t.w[k] = (dz ? fz : 1 - fz) * (dyy ? fy : 1 - fy) * (dxx ? fx : 1 - fx);
            }
    return t;
}

}  // namespace

Var roi_align3d(const Var& feat, const std::vector<Box>& boxes, int pd, int ph, int pw,
                int sampling) {
    require<NumericError>(feat->value.rank() == 4, "roi_align3d: expected [C, D, H, W] features");
    const int c = feat->value.dim(0), dep = feat->value.dim(1), h = feat->value.dim(2),
              w = feat->value.dim(3);
    const int r = static_cast<int>(boxes.size());
    const std::size_t volume = static_cast<std::size_t>(dep) * h * w;
    Tensor out = Tensor::zeros({r, c, pd, ph, pw});

    const int s = std::max(1, sampling);
    const int s3 = s * s * s;
    const float inv_samples = 1.0f / static_cast<float>(s3);
    const std::size_t cells = static_cast<std::size_t>(pd) * ph * pw;
    auto taps = std::make_shared<std::vector<TrilinearTap>>(static_cast<std::size_t>(r) * cells *
                                                            s3);

    for (int b = 0; b < r; ++b) {
        const Box& box = boxes[b];
        require<NumericError>(box.extent(0) > 0 && box.extent(1) > 0 && box.extent(2) > 0,
                              "roi_align3d: degenerate box");
        const double bd = box.extent(0) / pd;
        const double bh = box.extent(1) / ph;
        const double bw = box.extent(2) / pw;
        std::size_t cell = 0;
        for (int k = 0; k < pd; ++k)
            for (int i = 0; i < ph; ++i)
                for (int j = 0; j < pw; ++j, ++cell) {
                    std::size_t p = 0;
                    for (int uz = 0; uz < s; ++uz)
                        for (int uy = 0; uy < s; ++uy)
                            for (int ux = 0; ux < s; ++ux, ++p) {
                                const double sz = box.lo[0] + (k + (uz + 0.5) / s) * bd;
                                const double sy = box.lo[1] + (i + (uy + 0.5) / s) * bh;
                                const double sx = box.lo[2] + (j + (ux + 0.5) / s) * bw;
                                (*taps)[(static_cast<std::size_t>(b) * cells + cell) * s3 + p] =
                                    trilinear_tap(sz, sy, sx, dep, h, w);
                            }
                }
    }

    const float* fd = feat->value.data();
    for (int b = 0; b < r; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const float* fc = fd + ch * volume;
            float* oc = out.data() + (static_cast<std::size_t>(b) * c + ch) * cells;
            for (std::size_t cell = 0; cell < cells; ++cell) {
                float acc = 0.0f;
                const std::size_t base = (static_cast<std::size_t>(b) * cells + cell) * s3;
                for (int p = 0; p < s3; ++p) {
                    const TrilinearTap& t = (*taps)[base + p];
                    for (int q = 0; q < 8; ++q) acc += t.w[q] * fc[t.idx[q]];
                }
                oc[cell] = acc * inv_samples;
            }
        }
    }

    return make_op(std::move(out), {feat}, [taps, r, c, cells, s3, inv_samples, volume](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float* dy = self.grad.data();
        for (int b = 0; b < r; ++b) {
            for (int ch = 0; ch < c; ++ch) {
                float* gc = g.data() + ch * volume;
                const float* dyc = dy + (static_cast<std::size_t>(b) * c + ch) * cells;
                for (std::size_t cell = 0; cell < cells; ++cell) {
                    const float go = dyc[cell] * inv_samples;
                    const std::size_t base = (static_cast<std::size_t>(b) * cells + cell) * s3;
                    for (int p = 0; p < s3; ++p) {
                        const TrilinearTap& t = (*taps)[base + p];
                        for (int q = 0; q < 8; ++q) gc[t.idx[q]] += go * t.w[q];
                    }
                }
            }
        }
    });
}

// --- losses -------------------------------------------------------------------

Var bce_with_logits_mean(const Var& logits, const Tensor& targets) {
    require<NumericError>(logits->value.count() == targets.count(),
                          "bce_with_logits_mean: size mismatch");
    const std::size_t n = logits->value.count();
    require<NumericError>(n > 0, "bce_with_logits_mean: empty input");
    const float* x = logits->value.data();
    const float* t = targets.data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xv = x[i];
        total += std::max(xv, 0.0) - xv * t[i] + std::log1p(std::exp(-std::abs(xv)));
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
    return make_op(std::move(out), {logits}, [targets, n](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float go = self.grad.item() / static_cast<float>(n);
        const float* x = in.value.data();
        const float* t = targets.data();
        for (std::size_t i = 0; i < n; ++i) {
            const float sig = 1.0f / (1.0f + std::exp(-x[i]));
            g.data()[i] += go * (sig - t[i]);
        }
    });
}

Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels) {
    require<NumericError>(logits->value.rank() == 2, "softmax_ce_mean: expected [N, C] logits");
    const int n = logits->value.dim(0);
    const int c = logits->value.dim(1);
    require<NumericError>(static_cast<std::size_t>(n) == labels.size(),
                          "softmax_ce_mean: label count mismatch");
    require<NumericError>(n > 0, "softmax_ce_mean: empty batch");

    const float* z = logits->value.data();
    double total = 0.0;
    Tensor probs = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        require<NumericError>(labels[i] >= 0 && labels[i] < c, "softmax_ce_mean: bad label");
        const float* zi = z + static_cast<long>(i) * c;
        float m = zi[0];
        for (int k = 1; k < c; ++k) m = std::max(m, zi[k]);
        double s = 0.0;
        for (int k = 0; k < c; ++k) s += std::exp(static_cast<double>(zi[k]) - m);
        const double lse = m + std::log(s);
        total += lse - zi[labels[i]];
        float* pi = probs.data() + static_cast<long>(i) * c;
        for (int k = 0; k < c; ++k)
            pi[k] = static_cast<float>(std::exp(static_cast<double>(zi[k]) - lse));
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / n));
    return make_op(std::move(out), {logits}, [probs, labels, n, c](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float go = self.grad.item() / static_cast<float>(n);
        for (int i = 0; i < n; ++i) {
            const float* pi = probs.data() + static_cast<long>(i) * c;
            float* gi = g.data() + static_cast<long>(i) * c;
            for (int k = 0; k < c; ++k) gi[k] += go * (pi[k] - (k == labels[i] ? 1.0f : 0.0f));
        }
    });
}

Var smooth_l1_mean(const Var& pred, const Tensor& targets) {
    require<NumericError>(pred->value.count() == targets.count(), "smooth_l1_mean: size mismatch");
    const std::size_t n = pred->value.count();
    require<NumericError>(n > 0, "smooth_l1_mean: empty input");
    const float* p = pred->value.data();
    const float* t = targets.data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(static_cast<double>(t[i]) - p[i]);
        total += d < 1.0 ? 0.5 * d * d : d - 0.5;
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
    return make_op(std::move(out), {pred}, [targets, n](Node& self) {
        Node& in = *self.inputs[0];
        if (!in.needs_grad) return;
        Tensor& g = ensure_grad(in);
        const float go = self.grad.item() / static_cast<float>(n);
        const float* p = in.value.data();
        const float* t = targets.data();
        for (std::size_t i = 0; i < n; ++i)
            g.data()[i] += go * std::clamp(p[i] - t[i], -1.0f, 1.0f);
    });
}

Tensor softmax_rows_value(const Tensor& logits) {
    require<NumericError>(logits.rank() == 2, "softmax_rows_value: expected [N, C]");
    const int n = logits.dim(0), c = logits.dim(1);
    Tensor out = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        const float* zi = logits.data() + static_cast<long>(i) * c;
        float* oi = out.data() + static_cast<long>(i) * c;
        float m = zi[0];
        for (int k = 1; k < c; ++k) m = std::max(m, zi[k]);
        double s = 0.0;
        for (int k = 0; k < c; ++k) s += std::exp(static_cast<double>(zi[k]) - m);
        for (int k = 0; k < c; ++k)
            oi[k] = static_cast<float>(std::exp(static_cast<double>(zi[k]) - m) / s);
    }
    return out;
}

}  // namespace regdet::nn
