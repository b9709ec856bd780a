#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

// ARMA building blocks shared by SARIMAX estimation and forecasting.
//
// Sign conventions: ar holds phi_1..phi_p of phi(B) = 1 - sum phi_k B^k,
// ma holds theta_1..theta_q of theta(B) = 1 + sum theta_k B^k.
// All covariances are for unit innovation variance.

namespace crisiscast::sarimax {

struct ArmaPolynomials {
    std::vector<double> ar;
    std::vector<double> ma;

    /// Harvey state dimension max(p, q + 1).
    [[nodiscard]] int state_dim() const;
};

/// Multiplies out phi(B)Phi(B^s) and theta(B)Theta(B^s).
ArmaPolynomials expand_seasonal(std::span<const double> ar, std::span<const double> ma,
                                std::span<const double> seasonal_ar, std::span<const double> seasonal_ma, int s);

/// psi_0..psi_{count-1} of the MA(infinity) representation.
std::vector<double> psi_weights(const ArmaPolynomials &poly, int count);

/// gamma(0..max_lag) of the stationary ARMA process.
std::vector<double> autocovariances(const ArmaPolynomials &poly, int max_lag);

/// Stationary covariance of the Harvey-form state vector.
Eigen::MatrixXd stationary_state_covariance(const ArmaPolynomials &poly);

/// Partial autocorrelations in (-1,1) -> stationary AR coefficients (Durbin-Levinson).
std::vector<double> pacf_to_ar(std::span<const double> pacf);
/// Inverse of pacf_to_ar. Returns false if `ar` is not stationary.
bool ar_to_pacf(std::span<const double> ar, std::vector<double> &pacf);

/// Unconstrained -> constrained via tanh partial autocorrelations.
std::vector<double> constrain_ar(std::span<const double> raw);
std::vector<double> constrain_ma(std::span<const double> raw);
/// Inverse maps; throw NonStationaryParams when the input violates root conditions.
std::vector<double> unconstrain_ar(std::span<const double> ar);
std::vector<double> unconstrain_ma(std::span<const double> ma);

/// Largest modulus of the reciprocal roots of 1 - sum c_k z^k. < 1 means all roots lie outside the unit circle.
double max_inverse_root(std::span<const double> coeffs);
bool is_stationary(std::span<const double> ar);
bool is_invertible(std::span<const double> ma);

/// Output of filtering several data columns through one ARMA model. The columns share the gain
/// sequence, so innovations of a linear combination are the same combination of innovations.
struct KalmanOutput {
    std::vector<double> F;             ///< innovation variances (unit sigma2)
    Eigen::MatrixXd innovations;       ///< n x columns
    Eigen::MatrixXd filtered_state;    ///< r x columns, a_{n|n}; Riccati path only
    Eigen::MatrixXd filtered_cov;      ///< r x r, P_{n|n}; Riccati path only
    int steady_state_from = -1;        ///< step at which the covariance recursion converged, -1 if never
};

/// First column of stationary_state_covariance, Cov(state, y_t), in O(r) after the autocovariances.
Eigen::VectorXd stationary_state_first_column(const ArmaPolynomials &poly);

/// Exact Kalman filter on the Harvey ARMA form, started from the stationary distribution.
/// Uses Chandrasekhar recursions unless the final filtered state and covariance are requested,
/// in which case the full Riccati recursion runs.
KalmanOutput kalman_filter(const ArmaPolynomials &poly, const Eigen::MatrixXd &data, bool final_covariance = false);

/// Applies the Harvey transition matrix T on the left: (T M).
Eigen::MatrixXd apply_transition(const ArmaPolynomials &poly, const Eigen::MatrixXd &m);
/// Harvey selection vector R = (1, theta_1, ..., theta_{r-1}).
Eigen::VectorXd selection_vector(const ArmaPolynomials &poly);

}  // namespace crisiscast::sarimax
