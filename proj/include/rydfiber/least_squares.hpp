#ifndef RYDFIBER_LEAST_SQUARES_HPP
#define RYDFIBER_LEAST_SQUARES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace rydfiber::lsq
{
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Options
{
    int max_iter = 500;
    double ftol = 1e-15; // relative RSS decrease
    double xtol = 1e-13; // relative step size
    double lambda0 = 1e-3;
    double lambda_max = 1e14;
};

struct Result
{
    Vector x;
    double rss = 0.0;
    bool converged = false;
    int n_iter = 0;
    Matrix jtj;                       // J^T J of the weighted residuals at x
    std::vector< double > rss_trace;  // RSS after every accepted step, starting with the initial point
};

/// Central finite-difference Jacobian of a residual function. `scale` gives the typical
/// magnitude of each parameter so the step stays meaningful near zero.
template < typename Residual >
Matrix numeric_jacobian(const Residual& residual, const Vector& x, const Vector& scale)
{
    const double h_rel = std::cbrt(std::numeric_limits< double >::epsilon());
    Vector xp = x;
    Vector xm = x;
    Matrix jac;
    for (Eigen::Index j = 0; j < x.size(); ++j)
    {
        const double h = h_rel * std::max(std::abs(x[j]), scale[j]);
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        const Vector rp = residual(xp);
        const Vector rm = residual(xm);
        if (jac.size() == 0)
            jac.resize(rp.size(), x.size());
        jac.col(j) = (rp - rm) / (2.0 * h);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return jac;
}

/// Box-constrained Levenberg-Marquardt with Marquardt diagonal scaling.
/// `residual(x)` returns weighted residuals, `jacobian(x)` their derivative.
/// Steps that leave the box are projected back onto it. Only steps that lower the
/// RSS are accepted.
template < typename Residual, typename Jacobian >
Result levenberg_marquardt(const Residual& residual, const Jacobian& jacobian, Vector x, const Vector& lower,
                           const Vector& upper, const Options& opt = {})
{
    const auto project = [&](Vector v) {
        for (Eigen::Index j = 0; j < v.size(); ++j)
            v[j] = std::clamp(v[j], lower[j], upper[j]);
        return v;
    };
    x = project(std::move(x));

    Result res;
    Vector r = residual(x);
    double rss = r.squaredNorm();
    res.rss_trace.push_back(rss);
    double lambda = opt.lambda0;

    Matrix jac = jacobian(x);
    Matrix jtj = jac.transpose() * jac;
    Vector g = jac.transpose() * r;

    for (res.n_iter = 0; res.n_iter < opt.max_iter; ++res.n_iter)
    {
        if (!(rss > 0.0))
        {
            res.converged = true;
            break;
        }
        Vector diag = jtj.diagonal();
        for (Eigen::Index j = 0; j < diag.size(); ++j)
            diag[j] = std::max(diag[j], 1e-30);

        bool accepted = false;
        while (lambda <= opt.lambda_max)
        {
            Matrix a = jtj;
            a.diagonal() += lambda * diag;
            const Vector step = a.ldlt().solve(-g);
            const Vector x_new = project(x + step);
            const Vector r_new = residual(x_new);
            const double rss_new = r_new.squaredNorm();
            if (std::isfinite(rss_new) && rss_new < rss)
            {
                const double drop = rss - rss_new;
                const double dx = (x_new - x).norm();
                x = x_new;
                r = r_new;
                rss = rss_new;
                res.rss_trace.push_back(rss);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (drop <= opt.ftol * rss || dx <= opt.xtol * (x.norm() + opt.xtol))
                    res.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted)
        {
            // No descent direction left at working precision: a stationary point.
            res.converged = true;
            break;
        }
        jac = jacobian(x);
        jtj = jac.transpose() * jac;
        g = jac.transpose() * r;
        if (res.converged)
        {
            ++res.n_iter;
            break;
        }
    }
    res.x = x;
    res.rss = rss;
    res.jtj = jac.transpose() * jac;
    return res;
}

/// Linearized covariance (J^T J)^-1 * rss / (n - p). Empty when J^T J is singular or n <= p.
inline std::optional< Matrix > covariance(const Matrix& jtj, double rss, std::size_t n_obs)
{
    const auto p = static_cast< std::size_t >(jtj.rows());
    if (n_obs <= p)
        return std::nullopt;
    // Rescale to unit diagonal so the conditioning test ignores parameter units.
    Vector d = jtj.diagonal();
    for (Eigen::Index i = 0; i < d.size(); ++i)
    {
        if (!(d[i] > 0.0) || !std::isfinite(d[i]))
            return std::nullopt;
        d[i] = 1.0 / std::sqrt(d[i]);
    }
    const Matrix scaled = d.asDiagonal() * jtj * d.asDiagonal();
    Eigen::JacobiSVD< Matrix > svd(scaled);
    const auto& sv = svd.singularValues();
    if (!(sv[sv.size() - 1] > 1e-12 * sv[0]))
        return std::nullopt;
    const Matrix inv = d.asDiagonal() * scaled.inverse() * d.asDiagonal();
    return inv * (rss / static_cast< double >(n_obs - p));
}

} // namespace rydfiber::lsq
#endif // RYDFIBER_LEAST_SQUARES_HPP
