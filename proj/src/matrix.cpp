#include "plume/matrix.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace plume {

namespace {

// Pin the BLAS thread pool before first use; threaded reductions would make
// results depend on scheduling.
struct BlasSingleThread {
    BlasSingleThread() { openblas_set_num_threads(1); }
};

}  // namespace

void gemm(bool ta, bool tb, double alpha, const Matrix& a, const Matrix& b, double beta,
          Matrix& out) {
    static BlasSingleThread pin;
    const int m = ta ? a.cols : a.rows;
    const int k = ta ? a.rows : a.cols;
    const int kb = tb ? b.cols : b.rows;
    const int n = tb ? b.rows : b.cols;
    assert(k == kb && out.rows == m && out.cols == n);
    (void)kb;
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a.data.data(), a.cols, b.data.data(), b.cols, beta,
                out.data.data(), out.cols);
}

}  // namespace plume
