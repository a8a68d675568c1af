#pragma once
// Common linear-algebra aliases and the shared PSD factorization helper.

#include <Eigen/Dense>

#include "langevin/errors.hpp"

namespace langevin {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// Lower Cholesky factor of a PSD matrix. Matrices that are singular to
// rounding get a relative diagonal jitter ladder (1e-14 .. 1e-10 of the max
// diagonal) before we give up; an exactly zero matrix factors to zero.
template <class M>
M chol_psd(const M& cov, double* jitter_used = nullptr) {
    if (jitter_used) *jitter_used = 0.0;
    const double scale = cov.diagonal().maxCoeff();
    if (scale == 0.0 && cov.cwiseAbs().maxCoeff() == 0.0) return M::Zero(cov.rows(), cov.cols());
    for (double rel = 0.0; rel <= 1.1e-10; rel = (rel == 0.0) ? 1e-14 : rel * 10.0) {
        M m = cov;
        m.diagonal().array() += rel * scale;
        Eigen::LLT<M> llt(m);
        if (llt.info() == Eigen::Success) {
            if (jitter_used) *jitter_used = rel * scale;
            return llt.matrixL();
        }
    }
    throw numerical_error("chol_psd: matrix not PSD after jitter escalation");
}

} // namespace langevin
