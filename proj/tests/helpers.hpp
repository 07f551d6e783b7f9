#pragma once

#include <Eigen/Dense>

// Exact elementwise equality for dense Eigen expressions (bit-equality for
// doubles, integer equality for integer matrices).
template <typename A, typename B>
bool bits_equal(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return (a.derived().array() == b.derived().array()).all();
}
