#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace qcbm {

/// Multi-scale Gaussian kernel K(x, y) = (1/c) sum_i exp(-|x - y|^2 / (2 sigma_i)).
/// Note the bandwidth enters linearly, not squared.
class RbfKernel {
public:
    explicit RbfKernel(std::vector<double> bandwidths);

    /// {0.25, 0.5, 1, 2, 4}: spans the squared Hamming distances of small BAS images.
    static RbfKernel default_bandwidths();

    [[nodiscard]] const std::vector<double>& bandwidths() const { return sigmas_; }
    [[nodiscard]] double from_sq_dist(double sq_dist) const;
    /// d K / d(sq_dist)
    [[nodiscard]] double d_sq_dist(double sq_dist) const;

private:
    std::vector<double> sigmas_;
};

double kernel_value(const RbfKernel& k, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y);

/// Rows of A and B are samples; entry (i, j) = K(A_i, B_j).
Eigen::MatrixXd kernel_matrix(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// A kernel evaluated directly on basis-state indices (bitstrings). Used where
/// only inner products in some feature space are available.
using OutcomeKernel = std::function<double(std::uint32_t, std::uint32_t)>;

/// Image-space RBF on bit-vectors; |x - y|^2 is the Hamming distance.
OutcomeKernel bit_rbf_kernel(const RbfKernel& k, int n_bits);

}  // namespace qcbm
