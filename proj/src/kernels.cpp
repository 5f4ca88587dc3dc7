#include "qcbm/kernels.hpp"

#include <bit>
#include <cmath>
#include <memory>

#include "qcbm/error.hpp"

namespace qcbm {

RbfKernel::RbfKernel(std::vector<double> bandwidths) : sigmas_(std::move(bandwidths)) {
    if (sigmas_.empty()) throw ConfigError("RBF kernel needs at least one bandwidth");
    for (double s : sigmas_) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("RBF bandwidths must be positive and finite");
    }
}

RbfKernel RbfKernel::default_bandwidths() { return RbfKernel({0.25, 0.5, 1.0, 2.0, 4.0}); }

double RbfKernel::from_sq_dist(double sq_dist) const {
    double s = 0.0;
    for (double sigma : sigmas_) s += std::exp(-sq_dist / (2.0 * sigma));
    return s / static_cast<double>(sigmas_.size());
}

double RbfKernel::d_sq_dist(double sq_dist) const {
    double s = 0.0;
    for (double sigma : sigmas_) s -= std::exp(-sq_dist / (2.0 * sigma)) / (2.0 * sigma);
    return s / static_cast<double>(sigmas_.size());
}

double kernel_value(const RbfKernel& k, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (x.size() != y.size()) throw ShapeError("kernel_value: dimension mismatch");
    return k.from_sq_dist((x - y).squaredNorm());
}

Eigen::MatrixXd kernel_matrix(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) throw ShapeError("kernel_matrix: feature dimensions differ");
    Eigen::MatrixXd out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = k.from_sq_dist((a.row(i) - b.row(j)).squaredNorm());
    }
    return out;
}

OutcomeKernel bit_rbf_kernel(const RbfKernel& k, int n_bits) {
    auto table = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n_bits) + 1);
    for (int d = 0; d <= n_bits; ++d) (*table)[static_cast<std::size_t>(d)] = k.from_sq_dist(d);
    return [table](std::uint32_t x, std::uint32_t y) { return (*table)[static_cast<std::size_t>(std::popcount(x ^ y))]; };
}

}  // namespace qcbm
