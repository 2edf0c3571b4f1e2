#include "stochunfold/grid.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stochunfold/rng.hpp"
#include "stochunfold/solvers.hpp"

namespace stochunfold {

std::vector<double> Domain::trapezoid_weights() const {
  Int3 nn = nodes_per_axis();
  Vec3 hh = h();
  std::vector<double> w(num_nodes());
  for_sites(nn, [&](const Idx3& j) {
    double v = 1.0;
    for (int i = 0; i < d; ++i)
      v *= (j[i] == 0 || j[i] == n[i]) ? hh[i] / 2.0 : hh[i];
    w[linear_index(j, nn)] = v;
  });
  return w;
}

std::shared_ptr<const Domain> make_domain(int d, Int3 n, Vec3 size) {
  require_config(d >= 1 && d <= 3, "domain dimension must be 1, 2 or 3");
  for (int i = 0; i < d; ++i) {
    require_config(n[i] >= 1, "need at least one cell per axis");
    require_config(size[i] > 0.0, "box edge lengths must be positive");
  }
  for (int i = d; i < 3; ++i) {
    require_config(n[i] == 1, "unused axes must have one cell");
    size[i] = 1.0;
  }
  auto dom = std::make_shared<Domain>();
  dom->d = d;
  dom->n = n;
  dom->size = size;
  return dom;
}

RandomField make_field(std::shared_ptr<const Domain> domain,
                       std::shared_ptr<const SamplePlan> plan, Stage stage, int m) {
  require(m >= 1, "field needs at least one component");
  RandomField f;
  f.domain = std::move(domain);
  f.plan = plan;
  f.stage = stage;
  f.m = m;
  f.weights = plan->weights;
  f.data.assign(plan->size(), std::vector<double>(f.sites() * m, 0.0));
  return f;
}

RandomField make_plain_field(std::shared_ptr<const Domain> domain, Stage stage, int m) {
  require(m >= 1, "field needs at least one component");
  RandomField f;
  f.domain = std::move(domain);
  f.stage = stage;
  f.m = m;
  f.weights = {1.0};
  f.data.assign(1, std::vector<double>(f.sites() * m, 0.0));
  return f;
}

RandomField replicate(const RandomField& single, std::shared_ptr<const SamplePlan> plan) {
  require(single.realizations() == 1, "replicate expects a single-realization field");
  RandomField f = make_field(single.domain, plan, single.stage, single.m);
  for (auto& row : f.data) row = single.data[0];
  f.eps = single.eps;
  return f;
}

namespace {

// Corner offsets of the unit cell, fixed order.
int corner_count(int d) { return 1 << d; }

inline Idx3 corner(const Idx3& c, int mask) {
  return {c[0] + (mask & 1), c[1] + ((mask >> 1) & 1), c[2] + ((mask >> 2) & 1)};
}

}  // namespace

RandomField gradient(const RandomField& u) {
  require(u.stage == Stage::node, "gradient needs a nodal field");
  const Domain& dom = *u.domain;
  int d = dom.d, m = u.m;
  RandomField g;
  g.domain = u.domain;
  g.plan = u.plan;
  g.stage = Stage::cell;
  g.m = m * d;
  g.eps = u.eps;
  g.weights = u.weights;
  g.data.assign(u.realizations(), std::vector<double>(dom.num_cells() * g.m, 0.0));

  Int3 nn = dom.nodes_per_axis();
  Vec3 hh = dom.h();
  int nc = corner_count(d);
  double scale = 1.0 / static_cast<double>(nc / 2);
  for (std::size_t r = 0; r < u.realizations(); ++r) {
    const auto& in = u.data[r];
    auto& out = g.data[r];
    for_sites(dom.n, [&](const Idx3& c) {
      std::int64_t cs = linear_index(c, dom.n) * g.m;
      for (int mask = 0; mask < nc; ++mask) {
        std::int64_t js = linear_index(corner(c, mask), nn) * m;
        for (int axis = 0; axis < d; ++axis) {
          double sgn = (mask >> axis) & 1 ? 1.0 : -1.0;
          double f = sgn * scale / hh[axis];
          for (int q = 0; q < m; ++q) out[cs + q * d + axis] += f * in[js + q];
        }
      }
    });
  }
  return g;
}

RandomField sym_gradient(const RandomField& u) {
  const Domain& dom = *u.domain;
  require(u.m == dom.d, "symmetrized gradient needs a displacement field (m == d)");
  RandomField g = gradient(u);
  int d = dom.d;
  for (auto& row : g.data) {
    for (std::int64_t s = 0; s < dom.num_cells(); ++s) {
      double* blk = row.data() + s * d * d;
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
          double v = 0.5 * (blk[i * d + j] + blk[j * d + i]);
          blk[i * d + j] = v;
          blk[j * d + i] = v;
        }
    }
  }
  return g;
}

RandomField cell_average(const RandomField& u) {
  require(u.stage == Stage::node, "cell averaging needs a nodal field");
  const Domain& dom = *u.domain;
  int d = dom.d, m = u.m;
  RandomField g;
  g.domain = u.domain;
  g.plan = u.plan;
  g.stage = Stage::cell;
  g.m = m;
  g.eps = u.eps;
  g.weights = u.weights;
  g.data.assign(u.realizations(), std::vector<double>(dom.num_cells() * m, 0.0));
  Int3 nn = dom.nodes_per_axis();
  int nc = corner_count(d);
  double scale = 1.0 / nc;
  for (std::size_t r = 0; r < u.realizations(); ++r) {
    const auto& in = u.data[r];
    auto& out = g.data[r];
    for_sites(dom.n, [&](const Idx3& c) {
      std::int64_t cs = linear_index(c, dom.n) * m;
      for (int mask = 0; mask < nc; ++mask) {
        std::int64_t js = linear_index(corner(c, mask), nn) * m;
        for (int q = 0; q < m; ++q) out[cs + q] += scale * in[js + q];
      }
    });
  }
  return g;
}

namespace {

std::vector<double> site_quadrature(const RandomField& u) {
  if (u.stage == Stage::node) return u.domain->trapezoid_weights();
  return std::vector<double>(u.domain->num_cells(), u.domain->cell_volume());
}

}  // namespace

double norm_p(const RandomField& u, double p) {
  require(p >= 1.0, "norm exponent must be >= 1");
  std::vector<double> q = site_quadrature(u);
  Kahan total;
  for (std::size_t r = 0; r < u.realizations(); ++r) {
    const auto& row = u.data[r];
    Kahan inner_sum;
    for (std::int64_t s = 0; s < u.sites(); ++s) {
      double acc = 0.0;
      for (int c = 0; c < u.m; ++c) {
        double v = std::abs(row[s * u.m + c]);
        acc += (p == 2.0) ? v * v : std::pow(v, p);
      }
      inner_sum.add(q[s] * acc);
    }
    total.add(u.weights[r] * inner_sum.value());
  }
  return std::pow(total.value(), 1.0 / p);
}

double inner(const RandomField& u, const RandomField& v) {
  require(u.stage == v.stage && u.m == v.m && u.sites() == v.sites() &&
              u.realizations() == v.realizations(),
          "inner product needs identically laid out fields");
  std::vector<double> q = site_quadrature(u);
  Kahan total;
  for (std::size_t r = 0; r < u.realizations(); ++r) {
    const auto& a = u.data[r];
    const auto& b = v.data[r];
    Kahan row;
    for (std::int64_t s = 0; s < u.sites(); ++s) {
      double acc = 0.0;
      for (int c = 0; c < u.m; ++c) acc += a[s * u.m + c] * b[s * u.m + c];
      row.add(q[s] * acc);
    }
    total.add(u.weights[r] * row.value());
  }
  return total.value();
}

void axpy(double alpha, const RandomField& x, RandomField& y) {
  require(x.stage == y.stage && x.m == y.m && x.sites() == y.sites() &&
              x.realizations() == y.realizations(),
          "axpy needs identically laid out fields");
  for (std::size_t r = 0; r < x.realizations(); ++r)
    for (std::size_t i = 0; i < x.data[r].size(); ++i)
      y.data[r][i] += alpha * x.data[r][i];
}

double poincare_constant(const Domain& domain, int iterations) {
  Int3 nn = domain.nodes_per_axis();
  std::int64_t nnode = domain.num_nodes();
  std::vector<double> trap = domain.trapezoid_weights();
  std::vector<std::uint8_t> fixed(nnode, 0);
  for_sites(nn, [&](const Idx3& j) {
    if (domain.boundary_node(j)) fixed[linear_index(j, nn)] = 1;
  });
  Vec3 hh = domain.h();
  double vol = domain.cell_volume();
  int d = domain.d;
  int nc = 1 << d;
  double scale = 1.0 / static_cast<double>(nc / 2);

  auto stiffness = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for_sites(domain.n, [&](const Idx3& c) {
      double g[3] = {0, 0, 0};
      for (int mask = 0; mask < nc; ++mask) {
        std::int64_t js = linear_index(corner(c, mask), nn);
        double uj = fixed[js] ? 0.0 : x[js];
        for (int axis = 0; axis < d; ++axis) {
          double sgn = (mask >> axis) & 1 ? 1.0 : -1.0;
          g[axis] += sgn * scale / hh[axis] * uj;
        }
      }
      for (int mask = 0; mask < nc; ++mask) {
        std::int64_t js = linear_index(corner(c, mask), nn);
        if (fixed[js]) continue;
        for (int axis = 0; axis < d; ++axis) {
          double sgn = (mask >> axis) & 1 ? 1.0 : -1.0;
          y[js] += sgn * scale / hh[axis] * vol * g[axis];
        }
      }
    });
  };

  HashStream rng(0x9e1ceu);
  std::vector<double> x(nnode, 0.0);
  for (std::int64_t i = 0; i < nnode; ++i)
    if (!fixed[i]) x[i] = rng.next_symmetric();
  std::vector<double> mx(nnode), y(nnode);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::int64_t i = 0; i < nnode; ++i) mx[i] = fixed[i] ? 0.0 : trap[i] * x[i];
    std::fill(y.begin(), y.end(), 0.0);
    CgResult cg = conjugate_gradient(stiffness, mx, y, 1e-12, 20000);
    require(cg.converged, "Poincare power iteration: inner solve failed");
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < nnode; ++i) {
      if (fixed[i]) continue;
      num += trap[i] * y[i] * y[i];
      den += trap[i] * x[i] * y[i];  // x^T M y = y^T K y at the solve
    }
    lambda = num / den;
    double nrm = std::sqrt(num);
    for (std::int64_t i = 0; i < nnode; ++i) x[i] = fixed[i] ? 0.0 : y[i] / nrm;
  }
  return std::sqrt(lambda);
}

namespace {

std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

constexpr char kMagic[8] = {'S', 'U', 'F', 'L', 'D', '0', '0', '1'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void write_csv(const RandomField& u, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << "realization,i1,i2,i3";
  for (int c = 0; c < u.m; ++c) out << ",c" << c;
  out << "\n";
  Int3 ext = u.extents();
  for (std::size_t r = 0; r < u.realizations(); ++r) {
    for_sites(ext, [&](const Idx3& s) {
      std::int64_t idx = linear_index(s, ext);
      out << r << "," << s[0] << "," << s[1] << "," << s[2];
      for (int c = 0; c < u.m; ++c) out << "," << fmt17(u.data[r][idx * u.m + c]);
      out << "\n";
    });
  }
  require(out.good(), "write failed for " + path);
}

void write_binary(const RandomField& u, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(u.domain->d));
  put<std::uint32_t>(out, u.stage == Stage::node ? 0u : 1u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(u.m));
  put<std::uint32_t>(out, u.eps ? 1u : 0u);
  for (int i = 0; i < 3; ++i) put<std::uint64_t>(out, static_cast<std::uint64_t>(u.domain->n[i]));
  for (int i = 0; i < 3; ++i) put<double>(out, u.domain->size[i]);
  put<double>(out, u.eps.value_or(0.0));
  put<std::uint64_t>(out, u.realizations());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(u.sites()));
  for (double w : u.weights) put<double>(out, w);
  for (const auto& row : u.data)
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  require(out.good(), "write failed for " + path);
}

BinaryFieldData read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          "bad field dump header in " + path);
  BinaryFieldData f;
  f.d = static_cast<int>(get<std::uint32_t>(in));
  f.stage = get<std::uint32_t>(in) == 0 ? Stage::node : Stage::cell;
  f.m = static_cast<int>(get<std::uint32_t>(in));
  f.has_eps = get<std::uint32_t>(in) != 0;
  for (int i = 0; i < 3; ++i) f.n[i] = static_cast<int>(get<std::uint64_t>(in));
  for (int i = 0; i < 3; ++i) f.size[i] = get<double>(in);
  f.eps = get<double>(in);
  auto nreal = get<std::uint64_t>(in);
  auto nsites = get<std::uint64_t>(in);
  f.weights.resize(nreal);
  for (auto& w : f.weights) w = get<double>(in);
  f.data.assign(nreal, std::vector<double>(nsites * f.m));
  for (auto& row : f.data)
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  require(in.good(), "truncated field dump in " + path);
  return f;
}

}  // namespace stochunfold
