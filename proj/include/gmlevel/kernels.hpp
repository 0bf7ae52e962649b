#ifndef GMLEVEL_KERNELS_HPP
#define GMLEVEL_KERNELS_HPP

#include <span>

#include "gmlevel/matrix.hpp"

// Dense products used by the layers. Each has a plain triple-loop serial
// version, kept as the test reference, and a cache-blocked OpenMP version
// used everywhere else. The parallel versions split work over output
// blocks only, so every output element is reduced in the same order no
// matter how many threads run: seeded training is reproducible across
// thread counts.
//
// Shapes (all row-major):
//   matmul_nt: C[m x n] = A[m x k] * B[n x k]^T   (layer forward)
//   matmul_nn: C[m x n] = A[m x k] * B[k x n]     (input gradient)
//   matmul_tn: C[m x n] = A[k x m]^T * B[k x n]   (weight gradient)
// The output is resized and overwritten.

namespace gmlevel::kernels {

namespace serial {
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
/// out[j] = sum_i a(i, j)
void column_sums(const Matrix& a, std::span<double> out);
}  // namespace serial

namespace parallel {
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);
void column_sums(const Matrix& a, std::span<double> out);
}  // namespace parallel

}  // namespace gmlevel::kernels

#endif  // GMLEVEL_KERNELS_HPP
