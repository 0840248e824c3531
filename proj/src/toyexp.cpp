#include "cift/toyexp.hpp"

#include "cift/io.hpp"
#include "cift/metrics.hpp"
#include "cift/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cift::toyexp {

namespace {

constexpr int kMaxRedraws = 50;
constexpr int kMaxIterations = 200;

// Pairwise |s du + de|^2 = a s^2 + b s + c, so the margin for any s costs one
// pass over the pairs.
struct PairQuadratic {
  int n = 0;
  std::vector<double> a, b, c;
  const Labels* labels = nullptr;

  double margin(double s) const {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double pos = 0.0, neg = 0.0;
      int np = 0, nn = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::size_t p = static_cast<std::size_t>(i) * n + j;
        const double dist = std::sqrt(std::max(0.0, (a[p] * s + b[p]) * s + c[p]));
        if ((*labels)[static_cast<std::size_t>(i)] == (*labels)[static_cast<std::size_t>(j)]) {
          pos += dist;
          ++np;
        } else {
          neg += dist;
          ++nn;
        }
      }
      total += neg / nn - pos / np;
    }
    return total / n;
  }
};

}  // namespace

ControlledFeatures gen_controlled_features(double qx_target, int n, int classes, int dim, Rng& rng) {
  if (classes < 2 || n < 2 * classes || n % classes != 0) {
    throw ParameterError("gen_controlled_features: n must be a multiple of classes with >= 2 per class");
  }
  if (dim < 1) throw ParameterError("gen_controlled_features: dim must be >= 1");
  if (!(qx_target >= 0.0) || !std::isfinite(qx_target)) {
    throw ParameterError("gen_controlled_features: qx_target must be finite and >= 0");
  }
  const double tol = qx_target > 0.0 ? 0.05 * qx_target : 0.05;
  ControlledFeatures out;
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = i % classes;

  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Matrix u(classes, dim), e(n, dim);
    for (int r = 0; r < classes; ++r)
      for (int j = 0; j < dim; ++j) u(r, j) = rng.normal();
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < dim; ++j) e(r, j) = rng.normal();

    PairQuadratic pq;
    pq.n = n;
    pq.labels = &out.labels;
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    pq.a.resize(nn);
    pq.b.resize(nn);
    pq.c.resize(nn);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const RowVector du = u.row(i % classes) - u.row(j % classes);
        const RowVector de = e.row(i) - e.row(j);
        const std::size_t p = static_cast<std::size_t>(i) * n + j;
        pq.a[p] = du.squaredNorm();
        pq.b[p] = 2.0 * du.dot(de);
        pq.c[p] = de.squaredNorm();
      }
    }

    double lo = 0.0;
    const double q0 = pq.margin(0.0);
    if (q0 > qx_target + tol) continue;  // this draw already overshoots
    double s = 0.0;
    if (std::abs(q0 - qx_target) > tol) {
      double hi = 1.0;
      int grow = 0;
      while (pq.margin(hi) < qx_target && grow++ < 60) hi *= 2.0;
      if (grow > 60) continue;
      bool found = false;
      for (int it = 0; it < kMaxIterations; ++it) {
        s = 0.5 * (lo + hi);
        const double q = pq.margin(s);
        if (std::abs(q - qx_target) <= 0.25 * tol) {
          found = true;
          break;
        }
        (q < qx_target ? lo : hi) = s;
      }
      if (!found) continue;
    }
    out.x.resize(n, dim);
    for (int i = 0; i < n; ++i) out.x.row(i) = s * u.row(i % classes) + e.row(i);
    out.separation = s;
    out.qx = metrics::margin_quality(out.x, out.labels);
    if (std::abs(out.qx - qx_target) <= tol) return out;
  }
  throw ConvergenceError("gen_controlled_features: could not reach Q_X = " + io::format_double(qx_target));
}

Matrix gen_controlled_affinity(double qa_target, const Labels& labels, int k, Rng& rng, double self_weight) {
  if (!(qa_target >= 0.0 && qa_target <= 1.0)) {
    throw ParameterError("gen_controlled_affinity: qa_target must lie in [0, 1]");
  }
  if (!(self_weight >= 0.0)) throw ParameterError("gen_controlled_affinity: self_weight must be >= 0");
  const int n = static_cast<int>(labels.size());
  if (n < 2) throw ParameterError("gen_controlled_affinity: need at least two samples");
  std::vector<std::vector<int>> pos(static_cast<std::size_t>(n)), neg(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)] ? pos : neg)[static_cast<std::size_t>(i)]
          .push_back(j);
    }
    if (pos[static_cast<std::size_t>(i)].empty() || neg[static_cast<std::size_t>(i)].empty()) {
      throw ParameterError("gen_controlled_affinity: every sample needs a positive and a negative");
    }
    if (k < 1 || k > static_cast<int>(neg[static_cast<std::size_t>(i)].size())) {
      throw ParameterError("gen_controlled_affinity: k must lie in [1, negatives per row]");
    }
  }
  const int good = static_cast<int>(std::lround(qa_target * n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<char> is_good(static_cast<std::size_t>(n), 0);
  for (int r = 0; r < good; ++r) is_good[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 1;

  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& p = pos[static_cast<std::size_t>(i)];
    auto nv = neg[static_cast<std::size_t>(i)];
    if (is_good[static_cast<std::size_t>(i)]) {
      for (int j : p) a(i, j) = rng.uniform(1.0, 2.0);
    } else {
      std::shuffle(nv.begin(), nv.end(), rng.engine());
      for (int r = 0; r < k; ++r) a(i, nv[static_cast<std::size_t>(r)]) = rng.uniform(1.0, 2.0);
      for (int j : p) a(i, j) = rng.uniform(0.0, 0.5);
    }
    a(i, i) = self_weight * a.row(i).sum();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

std::vector<double> default_qx_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back(0.25 * i);
  return g;
}

std::vector<double> default_qa_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(0.1 * i);
  return g;
}

std::vector<SurfaceCell> qy_surface(const std::vector<double>& qx_grid, const std::vector<double>& qa_grid,
                                    int repeats, std::uint64_t seed, const SurfaceParams& params) {
  if (qx_grid.empty() || qa_grid.empty()) throw ParameterError("qy_surface: grids must be nonempty");
  if (repeats < 1) throw ParameterError("qy_surface: repeats must be >= 1");
  const std::size_t nx = qx_grid.size(), na = qa_grid.size(), nr = static_cast<std::size_t>(repeats);
  struct Sample {
    double qx = 0.0;
    std::vector<double> qa, qy;
  };
  std::vector<Sample> samples(nx * nr);
  const Rng root(seed);
  parallel_for(nx * nr, [&](std::size_t task) {
    const std::size_t xi = task / nr, r = task % nr;
    const Rng cell = root.split(xi).split(r);
    Rng xr = cell.split(0);
    const ControlledFeatures f =
        gen_controlled_features(qx_grid[xi], params.n, params.classes, params.dim, xr);
    Sample& s = samples[task];
    s.qx = f.qx;
    for (std::size_t ai = 0; ai < na; ++ai) {
      Rng ar = cell.split(1 + ai);
      const Matrix a = gen_controlled_affinity(qa_grid[ai], f.labels, params.k, ar, params.self_weight);
      s.qa.push_back(metrics::affinity_quality(a, f.labels));
      s.qy.push_back(metrics::margin_quality(a * f.x, f.labels));
    }
  });
  std::vector<SurfaceCell> cells;
  cells.reserve(nx * na);
  for (std::size_t xi = 0; xi < nx; ++xi) {
    for (std::size_t ai = 0; ai < na; ++ai) {
      SurfaceCell c;
      c.qx_target = qx_grid[xi];
      c.qa_target = qa_grid[ai];
      c.repeats = repeats;
      double sum = 0.0;
      for (std::size_t r = 0; r < nr; ++r) {
        const Sample& s = samples[xi * nr + r];
        c.qx_achieved += s.qx / repeats;
        c.qa_achieved += s.qa[ai] / repeats;
        sum += s.qy[ai];
      }
      c.qy_mean = sum / repeats;
      double ss = 0.0;
      for (std::size_t r = 0; r < nr; ++r) {
        const double d = samples[xi * nr + r].qy[ai] - c.qy_mean;
        ss += d * d;
      }
      c.qy_std = repeats > 1 ? std::sqrt(ss / (repeats - 1)) : 0.0;
      cells.push_back(c);
    }
  }
  return cells;
}

std::string surface_csv(const std::vector<SurfaceCell>& cells) {
  std::ostringstream os;
  os << "qx_target,qa_target,qx_achieved,qa_achieved,qy_mean,qy_std,repeats\n";
  for (const auto& c : cells) {
    os << io::format_double(c.qx_target) << ',' << io::format_double(c.qa_target) << ','
       << io::format_double(c.qx_achieved) << ',' << io::format_double(c.qa_achieved) << ','
       << io::format_double(c.qy_mean) << ',' << io::format_double(c.qy_std) << ',' << c.repeats << '\n';
  }
  return os.str();
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("spearman: need two equal-length series");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace cift::toyexp
