#include "crisiscast/arma_state_space.hpp"

#include "crisiscast/error.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>

namespace crisiscast::sarimax {

namespace {

constexpr const char *kModule = "sarimax";
constexpr double kSteadyStateTol = 1e-12;
constexpr int kSparseSolveMinOrder = 24;

std::vector<double> poly_multiply(const std::vector<double> &a, const std::vector<double> &b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        for (std::size_t j = 0; j < b.size(); ++j) {
            out[i + j] += a[i] * b[j];
        }
    }
    return out;
}

struct Term {
    int lag;
    double coef;
};

}  // namespace

int ArmaPolynomials::state_dim() const {
    return std::max(static_cast<int>(ar.size()), static_cast<int>(ma.size()) + 1);
}

ArmaPolynomials expand_seasonal(std::span<const double> ar, std::span<const double> ma,
                                std::span<const double> seasonal_ar, std::span<const double> seasonal_ma, int s) {
    std::vector<double> ar_poly{1.0}, sar_poly{1.0}, ma_poly{1.0}, sma_poly{1.0};
    for (double c : ar) ar_poly.push_back(-c);
    for (double c : ma) ma_poly.push_back(c);
    if (!seasonal_ar.empty()) {
        sar_poly.assign(seasonal_ar.size() * static_cast<std::size_t>(s) + 1, 0.0);
        sar_poly[0] = 1.0;
        for (std::size_t k = 0; k < seasonal_ar.size(); ++k) {
            sar_poly[(k + 1) * static_cast<std::size_t>(s)] = -seasonal_ar[k];
        }
    }
    if (!seasonal_ma.empty()) {
        sma_poly.assign(seasonal_ma.size() * static_cast<std::size_t>(s) + 1, 0.0);
        sma_poly[0] = 1.0;
        for (std::size_t k = 0; k < seasonal_ma.size(); ++k) {
            sma_poly[(k + 1) * static_cast<std::size_t>(s)] = seasonal_ma[k];
        }
    }
    const auto full_ar = poly_multiply(ar_poly, sar_poly);
    const auto full_ma = poly_multiply(ma_poly, sma_poly);
    ArmaPolynomials out;
    out.ar.reserve(full_ar.size() - 1);
    for (std::size_t k = 1; k < full_ar.size(); ++k) out.ar.push_back(-full_ar[k]);
    out.ma.assign(full_ma.begin() + 1, full_ma.end());
    return out;
}

std::vector<double> psi_weights(const ArmaPolynomials &poly, int count) {
    std::vector<double> psi(static_cast<std::size_t>(std::max(count, 1)), 0.0);
    psi[0] = 1.0;
    const int p = static_cast<int>(poly.ar.size());
    const int q = static_cast<int>(poly.ma.size());
    for (int j = 1; j < count; ++j) {
        double v = j <= q ? poly.ma[static_cast<std::size_t>(j - 1)] : 0.0;
        for (int k = 1; k <= std::min(j, p); ++k) {
            v += poly.ar[static_cast<std::size_t>(k - 1)] * psi[static_cast<std::size_t>(j - k)];
        }
        psi[static_cast<std::size_t>(j)] = v;
    }
    return psi;
}

std::vector<double> autocovariances(const ArmaPolynomials &poly, int max_lag) {
    const int p = static_cast<int>(poly.ar.size());
    const int q = static_cast<int>(poly.ma.size());
    const auto psi = psi_weights(poly, q + 1);
    auto theta = [&](int j) { return j == 0 ? 1.0 : poly.ma[static_cast<std::size_t>(j - 1)]; };
    auto rhs = [&](int k) {
        double v = 0.0;
        for (int j = k; j <= q; ++j) v += theta(j) * psi[static_cast<std::size_t>(j - k)];
        return v;
    };

    // gamma(k) - sum_j phi_j gamma(|k-j|) = sum_{j>=k} theta_j psi_{j-k}, k = 0..p
    Eigen::VectorXd b(p + 1);
    for (int k = 0; k <= p; ++k) b(k) = rhs(k);
    std::vector<Term> ar_terms;
    for (int j = 1; j <= p; ++j) {
        const double c = poly.ar[static_cast<std::size_t>(j - 1)];
        if (c != 0.0) ar_terms.push_back({j, c});
    }
    Eigen::VectorXd g;
    // Multiplicative seasonal AR polynomials are long but sparse.
    if (p > kSparseSolveMinOrder && ar_terms.size() * 4 < static_cast<std::size_t>(p)) {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve((ar_terms.size() + 1) * static_cast<std::size_t>(p + 1));
        for (int k = 0; k <= p; ++k) {
            trips.emplace_back(k, k, 1.0);
            for (const auto &t : ar_terms) trips.emplace_back(k, std::abs(k - t.lag), -t.coef);
        }
        Eigen::SparseMatrix<double> a(p + 1, p + 1);
        a.setFromTriplets(trips.begin(), trips.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() == Eigen::Success) g = lu.solve(b);
    }
    if (g.size() == 0) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p + 1, p + 1);
        for (int k = 0; k <= p; ++k) {
            for (const auto &t : ar_terms) a(k, std::abs(k - t.lag)) -= t.coef;
        }
        g = a.partialPivLu().solve(b);
    }

    std::vector<double> gamma(static_cast<std::size_t>(std::max(max_lag, p) + 1), 0.0);
    for (int k = 0; k <= p; ++k) gamma[static_cast<std::size_t>(k)] = g(k);
    for (int k = p + 1; k <= max_lag; ++k) {
        double v = rhs(k);
        for (const auto &t : ar_terms) v += t.coef * gamma[static_cast<std::size_t>(k - t.lag)];
        gamma[static_cast<std::size_t>(k)] = v;
    }
    gamma.resize(static_cast<std::size_t>(max_lag) + 1);
    return gamma;
}

Eigen::MatrixXd stationary_state_covariance(const ArmaPolynomials &poly) {
    // State element i is sum_{j>=1} phi_{i+j} y_{t-j} + sum_{j>=0} theta_{i+j} eps_{t-j}; its covariances follow
    // from gamma (y with y), psi (y with later eps) and the identity (eps with eps).
    const int r = poly.state_dim();
    const auto gamma = autocovariances(poly, r);
    const auto psi = psi_weights(poly, r + 1);

    std::vector<Term> ar_terms, ma_terms{{0, 1.0}};
    for (std::size_t k = 0; k < poly.ar.size(); ++k) {
        if (poly.ar[k] != 0.0) ar_terms.push_back({static_cast<int>(k) + 1, poly.ar[k]});
    }
    for (std::size_t k = 0; k < poly.ma.size(); ++k) {
        if (poly.ma[k] != 0.0) ma_terms.push_back({static_cast<int>(k) + 1, poly.ma[k]});
    }

    std::vector<std::vector<Term>> y_part(static_cast<std::size_t>(r)), e_part(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        for (const auto &t : ar_terms) {
            if (t.lag >= i + 1) y_part[static_cast<std::size_t>(i)].push_back({t.lag - i, t.coef});
        }
        for (const auto &t : ma_terms) {
            if (t.lag >= i) e_part[static_cast<std::size_t>(i)].push_back({t.lag - i, t.coef});
        }
    }

    Eigen::MatrixXd p0(r, r);
    for (int i = 0; i < r; ++i) {
        const auto &yi = y_part[static_cast<std::size_t>(i)];
        const auto &ei = e_part[static_cast<std::size_t>(i)];
        for (int l = i; l < r; ++l) {
            const auto &yl = y_part[static_cast<std::size_t>(l)];
            const auto &el = e_part[static_cast<std::size_t>(l)];
            double v = 0.0;
            for (const auto &a : yi) {
                for (const auto &b : yl) v += a.coef * b.coef * gamma[static_cast<std::size_t>(std::abs(a.lag - b.lag))];
                for (const auto &b : el) {
                    if (b.lag >= a.lag) v += a.coef * b.coef * psi[static_cast<std::size_t>(b.lag - a.lag)];
                }
            }
            for (const auto &a : ei) {
                for (const auto &b : yl) {
                    if (a.lag >= b.lag) v += a.coef * b.coef * psi[static_cast<std::size_t>(a.lag - b.lag)];
                }
                for (const auto &b : el) {
                    if (a.lag == b.lag) v += a.coef * b.coef;
                }
            }
            p0(i, l) = v;
            p0(l, i) = v;
        }
    }
    return p0;
}

std::vector<double> pacf_to_ar(std::span<const double> pacf) {
    const std::size_t p = pacf.size();
    std::vector<double> phi(p, 0.0), prev(p, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
        const double rk = pacf[k];
        prev = phi;
        for (std::size_t j = 0; j < k; ++j) {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi[k] = rk;
    }
    return phi;
}

bool ar_to_pacf(std::span<const double> ar, std::vector<double> &pacf) {
    const std::size_t p = ar.size();
    std::vector<double> phi(ar.begin(), ar.end());
    pacf.assign(p, 0.0);
    for (std::size_t k = p; k-- > 0;) {
        const double rk = phi[k];
        if (!(std::abs(rk) < 1.0)) return false;
        pacf[k] = rk;
        std::vector<double> prev(k);
        const double denom = 1.0 - rk * rk;
        for (std::size_t j = 0; j < k; ++j) {
            prev[j] = (phi[j] + rk * phi[k - 1 - j]) / denom;
        }
        phi.assign(prev.begin(), prev.end());
    }
    return true;
}

std::vector<double> constrain_ar(std::span<const double> raw) {
    std::vector<double> r(raw.size());
    std::transform(raw.begin(), raw.end(), r.begin(), [](double u) { return std::tanh(u); });
    return pacf_to_ar(r);
}

std::vector<double> constrain_ma(std::span<const double> raw) {
    auto phi = constrain_ar(raw);
    for (auto &c : phi) c = -c;
    return phi;
}

std::vector<double> unconstrain_ar(std::span<const double> ar) {
    std::vector<double> pacf;
    if (!ar_to_pacf(ar, pacf)) {
        throw_numerical(kModule, "NonStationaryParams", "AR coefficients are not stationary");
    }
    for (auto &v : pacf) v = std::atanh(v);
    return pacf;
}

std::vector<double> unconstrain_ma(std::span<const double> ma) {
    std::vector<double> neg(ma.begin(), ma.end());
    for (auto &c : neg) c = -c;
    std::vector<double> pacf;
    if (!ar_to_pacf(neg, pacf)) {
        throw_numerical(kModule, "NonStationaryParams", "MA coefficients are not invertible");
    }
    for (auto &v : pacf) v = std::atanh(v);
    return pacf;
}

double max_inverse_root(std::span<const double> coeffs) {
    std::size_t p = coeffs.size();
    while (p > 0 && coeffs[p - 1] == 0.0) --p;
    if (p == 0) return 0.0;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k) companion(0, static_cast<Eigen::Index>(k)) = coeffs[k];
    for (std::size_t k = 1; k < p; ++k) companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = 1.0;
    const Eigen::VectorXcd ev = companion.eigenvalues();
    return ev.cwiseAbs().maxCoeff();
}

bool is_stationary(std::span<const double> ar) { return max_inverse_root(ar) < 1.0; }

bool is_invertible(std::span<const double> ma) {
    std::vector<double> neg(ma.begin(), ma.end());
    for (auto &c : neg) c = -c;
    return max_inverse_root(neg) < 1.0;
}

Eigen::VectorXd selection_vector(const ArmaPolynomials &poly) {
    const int r = poly.state_dim();
    Eigen::VectorXd rv = Eigen::VectorXd::Zero(r);
    rv(0) = 1.0;
    for (std::size_t k = 0; k < poly.ma.size(); ++k) rv(static_cast<Eigen::Index>(k) + 1) = poly.ma[k];
    return rv;
}

Eigen::MatrixXd apply_transition(const ArmaPolynomials &poly, const Eigen::MatrixXd &m) {
    const Eigen::Index r = m.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r, m.cols());
    if (r > 1) out.topRows(r - 1) = m.bottomRows(r - 1);
    for (std::size_t k = 0; k < poly.ar.size(); ++k) {
        if (poly.ar[k] != 0.0) out.row(static_cast<Eigen::Index>(k)) += poly.ar[k] * m.row(0);
    }
    return out;
}

Eigen::VectorXd stationary_state_first_column(const ArmaPolynomials &poly) {
    // Cov(state_i, y_t) = sum_{j>=1} phi_{i+j} gamma(j) + sum_{j>=0} theta_{i+j} psi_j
    const int r = poly.state_dim();
    const auto gamma = autocovariances(poly, r);
    const auto psi = psi_weights(poly, r + 1);
    const int p = static_cast<int>(poly.ar.size());
    const int q = static_cast<int>(poly.ma.size());
    Eigen::VectorXd col = Eigen::VectorXd::Zero(r);
    for (int i = 0; i < r; ++i) {
        double v = 0.0;
        for (int k = i + 1; k <= p; ++k) {
            const double c = poly.ar[static_cast<std::size_t>(k - 1)];
            if (c != 0.0) v += c * gamma[static_cast<std::size_t>(k - i)];
        }
        for (int k = i; k <= q; ++k) {
            const double c = k == 0 ? 1.0 : poly.ma[static_cast<std::size_t>(k - 1)];
            if (c != 0.0) v += c * psi[static_cast<std::size_t>(k - i)];
        }
        col(i) = v;
    }
    return col;
}

namespace {

/// Full Riccati recursion; also yields the final filtered state covariance.
KalmanOutput riccati_filter(const ArmaPolynomials &poly, const Eigen::MatrixXd &data) {
    const Eigen::Index n = data.rows();
    const Eigen::Index cols = data.cols();
    const Eigen::Index r = poly.state_dim();
    const Eigen::VectorXd rv = selection_vector(poly);
    const Eigen::MatrixXd rr = rv * rv.transpose();

    KalmanOutput out;
    out.F.resize(static_cast<std::size_t>(n));
    out.innovations.resize(n, cols);

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, cols);
    Eigen::MatrixXd p = stationary_state_covariance(poly);
    Eigen::MatrixXd p_next(r, r);
    Eigen::VectorXd p0(r);
    Eigen::RowVectorXd v(cols);
    bool steady = false;

    for (Eigen::Index t = 0; t < n; ++t) {
        p0 = p.col(0);
        const double f = p0(0);
        out.F[static_cast<std::size_t>(t)] = f;
        v = data.row(t) - a.row(0);
        out.innovations.row(t) = v;
        a.noalias() += (p0 / f) * v;  // filtered a_{t|t}

        if (t + 1 == n) {
            out.filtered_state = a;
            out.filtered_cov = p;
            out.filtered_cov.noalias() -= (p0 / f) * p0.transpose();
            break;
        }

        a = apply_transition(poly, a);
        if (steady) continue;

        // With Z = e1 the filtered covariance has a zero first row, so T P T' reduces to a shift.
        p_next.setZero();
        if (r > 1) {
            p_next.topLeftCorner(r - 1, r - 1) = p.bottomRightCorner(r - 1, r - 1);
            p_next.topLeftCorner(r - 1, r - 1).noalias() -= (p0.tail(r - 1) / f) * p0.tail(r - 1).transpose();
        }
        p_next += rr;
        const double change = (p_next - p).cwiseAbs().maxCoeff();
        p.swap(p_next);
        if (change < kSteadyStateTol) {
            steady = true;
            out.steady_state_from = static_cast<int>(t + 1);
        }
    }
    return out;
}

/// Chandrasekhar recursions. From the stationary start the predicted covariance changes by a
/// rank-one term W M W' each step, so only O(r) work per observation is needed.
KalmanOutput chandrasekhar_filter(const ArmaPolynomials &poly, const Eigen::MatrixXd &data) {
    const Eigen::Index n = data.rows();
    const Eigen::Index cols = data.cols();
    const Eigen::Index r = poly.state_dim();

    KalmanOutput out;
    out.F.resize(static_cast<std::size_t>(n));
    out.innovations.resize(n, cols);

    std::vector<Term> ar_terms;
    for (std::size_t k = 0; k < poly.ar.size(); ++k) {
        if (poly.ar[k] != 0.0) ar_terms.push_back({static_cast<int>(k), poly.ar[k]});
    }
    // x <- T x in place
    auto transition = [&](double *x) {
        const double x0 = x[0];
        for (Eigen::Index i = 0; i + 1 < r; ++i) x[i] = x[i + 1];
        x[r - 1] = 0.0;
        for (const auto &t : ar_terms) x[t.lag] += t.coef * x0;
    };

    Eigen::VectorXd g = stationary_state_first_column(poly);
    double f = g(0);
    transition(g.data());  // T P e1
    Eigen::VectorXd w = g;
    double m = -1.0 / f;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, cols);
    bool converged = false;

    for (Eigen::Index t = 0; t < n; ++t) {
        out.F[static_cast<std::size_t>(t)] = f;
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double v = data(t, c) - a(0, c);
            out.innovations(t, c) = v;
            double *ac = a.col(c).data();
            transition(ac);
            const double gain = v / f;
            for (Eigen::Index i = 0; i < r; ++i) ac[i] += g(i) * gain;
        }
        if (converged || t + 1 == n) continue;

        const double aw = w(0);
        const double update = m * aw * aw;
        if (update == 0.0) {
            converged = true;
            out.steady_state_from = static_cast<int>(t + 1);
            continue;
        }
        transition(w.data());  // w now holds T W
        const double f_next = f + update;
        g += (m * aw) * w;
        w -= g * (aw / f_next);
        m += m * update / f;
        f = f_next;
    }
    return out;
}

}  // namespace

KalmanOutput kalman_filter(const ArmaPolynomials &poly, const Eigen::MatrixXd &data, bool final_covariance) {
    return final_covariance ? riccati_filter(poly, data) : chandrasekhar_filter(poly, data);
}

}  // namespace crisiscast::sarimax
