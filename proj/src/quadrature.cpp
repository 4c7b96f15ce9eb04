#include "ewnet/quadrature.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace ewnet {

namespace {

// Golub-Welsch on a symmetric Jacobi matrix with zero diagonal.
QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  QuadratureRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    r.weights[i] = mu0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  // Symmetrize nodes and weights to remove round-off asymmetry.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (r.nodes[j] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[j]);
    r.nodes[i] = -x;
    r.nodes[j] = x;
    r.weights[i] = r.weights[j] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

template <class Make>
const QuadratureRule& cached(std::map<int, std::unique_ptr<QuadratureRule>>& cache, std::mutex& m,
                             int n, Make make) {
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<QuadratureRule>(make(n))).first;
  return *it->second;
}

}  // namespace

const QuadratureRule& gauss_hermite(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex m;
  return cached(cache, m, n, [](int n) {
    Eigen::VectorXd b(n - 1);
    for (int k = 1; k < n; ++k) b(k - 1) = std::sqrt(static_cast<double>(k));
    return golub_welsch(b, 1.0);
  });
}

const QuadratureRule& gauss_legendre(int n) {
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex m;
  return cached(cache, m, n, [](int n) {
    Eigen::VectorXd b(n - 1);
    for (int k = 1; k < n; ++k) b(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    return golub_welsch(b, 2.0);
  });
}

double gaussian_expectation(const std::function<double(double)>& f,
                            const std::vector<double>& breaks, int n_per_panel, double cut) {
  std::vector<double> pts{-cut};
  for (double b : breaks)
    if (b > -cut && b < cut) pts.push_back(b);
  pts.push_back(cut);
  std::sort(pts.begin(), pts.end());
  double s = 0.0;
  for (std::size_t p = 0; p + 1 < pts.size(); ++p) {
    if (pts[p + 1] - pts[p] <= 0.0) continue;
    s += integrate_gl([&](double z) { return f(z) * normal_pdf(z); }, pts[p], pts[p + 1],
                      n_per_panel);
  }
  return s;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_m;
  std::vector<std::thread> pool;
  const int t = std::min(jobs, n);
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_m);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace ewnet
