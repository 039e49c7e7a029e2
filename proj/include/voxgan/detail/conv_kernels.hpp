#pragma once

#include <cstdint>

// Raw strided-convolution kernels shared by conv3d / conv3d_transpose /
// conv2d forward and backward passes. All of them relate an "unstrided" index
// u to an "indexed" position u*stride - pad + kappa:
//
//   gather :  Y[b, cd, u]                += X[b, cs, u*s - p + kappa] * W
//   scatter:  Y[b, cd, u*s - p + kappa] += X[b, cs, u]               * W
//   dweight:  dW[cx, cu, kappa]         += sum_{b,u} Xs[b, cx, u*s - p + kappa] * U[b, cu, u]
//
// Weight addressing is parameterized by the two channel strides so the same
// kernels serve both weight layouts ([out,in,k...] and [in,out,k...]).
// Iteration bounds per kernel offset are precomputed, so the inner loops have
// no bounds checks; each accumulation order is fixed and serial, which keeps
// results bit-reproducible.

namespace voxgan::detail {

struct IndexRange {
    std::int64_t lo;
    std::int64_t hi;  // inclusive; lo > hi means empty
};

// Valid u in [0, unstrided) with u*s - p + kappa in [0, indexed).
inline IndexRange conv_valid_range(std::int64_t unstrided, std::int64_t indexed, std::int64_t s,
                                   std::int64_t p, std::int64_t kappa) {
    std::int64_t shift = p - kappa;
    std::int64_t lo = shift <= 0 ? 0 : (shift + s - 1) / s;
    std::int64_t hi = indexed - 1 + shift;
    hi = hi < 0 ? -1 : hi / s;
    if (hi > unstrided - 1) hi = unstrided - 1;
    return {lo, hi};
}

template <typename T>
void conv3d_gather(const T* x, const T* w, T* y, std::int64_t batch, std::int64_t cs_n,
                   std::int64_t cd_n, std::int64_t xd, std::int64_t xh, std::int64_t xw,
                   std::int64_t yd, std::int64_t yh, std::int64_t yw, std::int64_t k,
                   std::int64_t s, std::int64_t p, std::int64_t wstride_cd,
                   std::int64_t wstride_cs) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = x + b * cs_n * xd * xh * xw;
        T* yb = y + b * cd_n * yd * yh * yw;
        for (std::int64_t cd = 0; cd < cd_n; ++cd) {
            T* yc = yb + cd * yd * yh * yw;
            for (std::int64_t cs = 0; cs < cs_n; ++cs) {
                const T* xc = xb + cs * xd * xh * xw;
                const T* wc = w + cd * wstride_cd + cs * wstride_cs;
                for (std::int64_t kd = 0; kd < k; ++kd) {
                    IndexRange rd = conv_valid_range(yd, xd, s, p, kd);
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        IndexRange rh = conv_valid_range(yh, xh, s, p, kh);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            IndexRange rw = conv_valid_range(yw, xw, s, p, kw);
                            T wv = wc[(kd * k + kh) * k + kw];
                            if (wv == T(0)) continue;
                            for (std::int64_t od = rd.lo; od <= rd.hi; ++od) {
                                const T* xrow_d = xc + (od * s - p + kd) * xh * xw;
                                T* yrow_d = yc + od * yh * yw;
                                for (std::int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                                    const T* xrow = xrow_d + (oh * s - p + kh) * xw;
                                    T* yrow = yrow_d + oh * yw;
                                    for (std::int64_t ow = rw.lo; ow <= rw.hi; ++ow)
                                        yrow[ow] += wv * xrow[ow * s - p + kw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3d_scatter(const T* x, const T* w, T* y, std::int64_t batch, std::int64_t cs_n,
                    std::int64_t cd_n, std::int64_t xd, std::int64_t xh, std::int64_t xw,
                    std::int64_t yd, std::int64_t yh, std::int64_t yw, std::int64_t k,
                    std::int64_t s, std::int64_t p, std::int64_t wstride_cd,
                    std::int64_t wstride_cs) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = x + b * cs_n * xd * xh * xw;
        T* yb = y + b * cd_n * yd * yh * yw;
        for (std::int64_t cd = 0; cd < cd_n; ++cd) {
            T* yc = yb + cd * yd * yh * yw;
            for (std::int64_t cs = 0; cs < cs_n; ++cs) {
                const T* xc = xb + cs * xd * xh * xw;
                const T* wc = w + cd * wstride_cd + cs * wstride_cs;
                for (std::int64_t kd = 0; kd < k; ++kd) {
                    IndexRange rd = conv_valid_range(xd, yd, s, p, kd);
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        IndexRange rh = conv_valid_range(xh, yh, s, p, kh);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            IndexRange rw = conv_valid_range(xw, yw, s, p, kw);
                            T wv = wc[(kd * k + kh) * k + kw];
                            if (wv == T(0)) continue;
                            for (std::int64_t td = rd.lo; td <= rd.hi; ++td) {
                                const T* xrow_d = xc + td * xh * xw;
                                T* yrow_d = yc + (td * s - p + kd) * yh * yw;
                                for (std::int64_t th = rh.lo; th <= rh.hi; ++th) {
                                    const T* xrow = xrow_d + th * xw;
                                    T* yrow = yrow_d + (th * s - p + kh) * yw;
                                    for (std::int64_t tw = rw.lo; tw <= rw.hi; ++tw)
                                        yrow[tw * s - p + kw] += wv * xrow[tw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3d_dweight(const T* xs, const T* u, T* dw, std::int64_t batch, std::int64_t cx_n,
                    std::int64_t cu_n, std::int64_t xd, std::int64_t xh, std::int64_t xw,
                    std::int64_t ud, std::int64_t uh, std::int64_t uw, std::int64_t k,
                    std::int64_t s, std::int64_t p, std::int64_t wstride_cx,
                    std::int64_t wstride_cu) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = xs + b * cx_n * xd * xh * xw;
        const T* ub = u + b * cu_n * ud * uh * uw;
        for (std::int64_t cx = 0; cx < cx_n; ++cx) {
            const T* xc = xb + cx * xd * xh * xw;
            for (std::int64_t cu = 0; cu < cu_n; ++cu) {
                const T* uc = ub + cu * ud * uh * uw;
                T* wc = dw + cx * wstride_cx + cu * wstride_cu;
                for (std::int64_t kd = 0; kd < k; ++kd) {
                    IndexRange rd = conv_valid_range(ud, xd, s, p, kd);
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        IndexRange rh = conv_valid_range(uh, xh, s, p, kh);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            IndexRange rw = conv_valid_range(uw, xw, s, p, kw);
                            T acc = 0;
                            for (std::int64_t od = rd.lo; od <= rd.hi; ++od) {
                                const T* xrow_d = xc + (od * s - p + kd) * xh * xw;
                                const T* urow_d = uc + od * uh * uw;
                                for (std::int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                                    const T* xrow = xrow_d + (oh * s - p + kh) * xw;
                                    const T* urow = urow_d + oh * uw;
                                    for (std::int64_t ow = rw.lo; ow <= rw.hi; ++ow)
                                        acc += xrow[ow * s - p + kw] * urow[ow];
                                }
                            }
                            wc[(kd * k + kh) * k + kw] += acc;
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_gather(const T* x, const T* w, T* y, std::int64_t batch, std::int64_t cs_n,
                   std::int64_t cd_n, std::int64_t xh, std::int64_t xw, std::int64_t yh,
                   std::int64_t yw, std::int64_t k, std::int64_t s, std::int64_t p,
                   std::int64_t wstride_cd, std::int64_t wstride_cs) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = x + b * cs_n * xh * xw;
        T* yb = y + b * cd_n * yh * yw;
        for (std::int64_t cd = 0; cd < cd_n; ++cd) {
            T* yc = yb + cd * yh * yw;
            for (std::int64_t cs = 0; cs < cs_n; ++cs) {
                const T* xc = xb + cs * xh * xw;
                const T* wc = w + cd * wstride_cd + cs * wstride_cs;
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    IndexRange rh = conv_valid_range(yh, xh, s, p, kh);
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        IndexRange rw = conv_valid_range(yw, xw, s, p, kw);
                        T wv = wc[kh * k + kw];
                        if (wv == T(0)) continue;
                        for (std::int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                            const T* xrow = xc + (oh * s - p + kh) * xw;
                            T* yrow = yc + oh * yw;
                            for (std::int64_t ow = rw.lo; ow <= rw.hi; ++ow)
                                yrow[ow] += wv * xrow[ow * s - p + kw];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_scatter(const T* x, const T* w, T* y, std::int64_t batch, std::int64_t cs_n,
                    std::int64_t cd_n, std::int64_t xh, std::int64_t xw, std::int64_t yh,
                    std::int64_t yw, std::int64_t k, std::int64_t s, std::int64_t p,
                    std::int64_t wstride_cd, std::int64_t wstride_cs) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = x + b * cs_n * xh * xw;
        T* yb = y + b * cd_n * yh * yw;
        for (std::int64_t cd = 0; cd < cd_n; ++cd) {
            T* yc = yb + cd * yh * yw;
            for (std::int64_t cs = 0; cs < cs_n; ++cs) {
                const T* xc = xb + cs * xh * xw;
                const T* wc = w + cd * wstride_cd + cs * wstride_cs;
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    IndexRange rh = conv_valid_range(xh, yh, s, p, kh);
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        IndexRange rw = conv_valid_range(xw, yw, s, p, kw);
                        T wv = wc[kh * k + kw];
                        if (wv == T(0)) continue;
                        for (std::int64_t th = rh.lo; th <= rh.hi; ++th) {
                            const T* xrow = xc + th * xw;
                            T* yrow = yc + (th * s - p + kh) * yw;
                            for (std::int64_t tw = rw.lo; tw <= rw.hi; ++tw)
                                yrow[tw * s - p + kw] += wv * xrow[tw];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_dweight(const T* xs, const T* u, T* dw, std::int64_t batch, std::int64_t cx_n,
                    std::int64_t cu_n, std::int64_t xh, std::int64_t xw, std::int64_t uh,
                    std::int64_t uw, std::int64_t k, std::int64_t s, std::int64_t p,
                    std::int64_t wstride_cx, std::int64_t wstride_cu) {
    for (std::int64_t b = 0; b < batch; ++b) {
        const T* xb = xs + b * cx_n * xh * xw;
        const T* ub = u + b * cu_n * uh * uw;
        for (std::int64_t cx = 0; cx < cx_n; ++cx) {
            const T* xc = xb + cx * xh * xw;
            for (std::int64_t cu = 0; cu < cu_n; ++cu) {
                const T* uc = ub + cu * uh * uw;
                T* wc = dw + cx * wstride_cx + cu * wstride_cu;
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    IndexRange rh = conv_valid_range(uh, xh, s, p, kh);
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        IndexRange rw = conv_valid_range(uw, xw, s, p, kw);
                        T acc = 0;
                        for (std::int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                            const T* xrow = xc + (oh * s - p + kh) * xw;
                            const T* urow = uc + oh * uw;
                            for (std::int64_t ow = rw.lo; ow <= rw.hi; ++ow)
                                acc += xrow[ow * s - p + kw] * urow[ow];
                        }
                        wc[kh * k + kw] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace voxgan::detail
