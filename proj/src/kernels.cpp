#include "driftstream/kernels.hpp"

#include <cmath>

namespace driftstream::kern {

void rff_batch(const double* w, const double* phase, double scale, const double* z, double* phi,
               int n, int d, int m) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* zi = z + static_cast<std::size_t>(i) * d;
        double* out = phi + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* wj = w + static_cast<std::size_t>(j) * d;
            double acc = phase[j];
            for (int k = 0; k < d; ++k) acc += wj[k] * zi[k];
            out[j] = scale * std::cos(acc);
        }
    }
}

void gram(const double* f, double* g, int n, int m) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double acc = 0.0;
            for (int r = 0; r < n; ++r) {
                const double* row = f + static_cast<std::size_t>(r) * m;
                acc += row[i] * row[j];
            }
            g[static_cast<std::size_t>(i) * m + j] = acc;
            g[static_cast<std::size_t>(j) * m + i] = acc;
        }
    }
}

void tgemv(const double* f, const double* y, double* out, int n, int m) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) acc += f[static_cast<std::size_t>(r) * m + j] * y[r];
        out[j] = acc;
    }
}

bool cholesky_inplace(double* a, int n) {
    for (int j = 0; j < n; ++j) {
        double d = a[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            double l = a[static_cast<std::size_t>(j) * n + k];
            d -= l * l;
        }
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        double ljj = std::sqrt(d);
        a[static_cast<std::size_t>(j) * n + j] = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k) {
                s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
            }
            a[static_cast<std::size_t>(i) * n + j] = s / ljj;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] = 0.0;
    }
    return true;
}

void solve_lower(const double* l, const double* b, double* x, int n) {
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        const double* row = l + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < i; ++k) s -= row[k] * x[k];
        x[i] = s / row[i];
    }
}

void solve_lower_transpose(const double* l, const double* b, double* x, int n) {
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= l[static_cast<std::size_t>(k) * n + i] * x[k];
        x[i] = s / l[static_cast<std::size_t>(i) * n + i];
    }
}

double quad_form_inv(const double* l, const double* phi, double* work, int n) {
    solve_lower(l, phi, work, n);
    double q = 0.0;
    for (int i = 0; i < n; ++i) q += work[i] * work[i];
    return q;
}

namespace serial {

void rff_batch(const double* w, const double* phase, double scale, const double* z, double* phi,
               int n, int d, int m) {
    for (int i = 0; i < n; ++i) {
        const double* zi = z + static_cast<std::size_t>(i) * d;
        double* out = phi + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* wj = w + static_cast<std::size_t>(j) * d;
            double acc = phase[j];
            for (int k = 0; k < d; ++k) acc += wj[k] * zi[k];
            out[j] = scale * std::cos(acc);
        }
    }
}

void gram(const double* f, double* g, int n, int m) {
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            double acc = 0.0;
            for (int r = 0; r < n; ++r) {
                const double* row = f + static_cast<std::size_t>(r) * m;
                acc += row[i] * row[j];
            }
            g[static_cast<std::size_t>(i) * m + j] = acc;
            g[static_cast<std::size_t>(j) * m + i] = acc;
        }
    }
}

void tgemv(const double* f, const double* y, double* out, int n, int m) {
    for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) acc += f[static_cast<std::size_t>(r) * m + j] * y[r];
        out[j] = acc;
    }
}

}  // namespace serial

}  // namespace driftstream::kern
