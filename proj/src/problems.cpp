#include "fbsde/problem.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace fbsde {

namespace {

std::size_t batch_rows(Tape& tp, Val x) { return tp.value(x).dim(0); }

Val zeros_like_batch(Tape& tp, Val x, std::size_t cols) {
  return tp.constant(Tensor({batch_rows(tp, x), cols}));
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double row_total(const Tensor& x, std::size_t row) {
  const std::size_t cols = x.dim(1);
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) s += x[row * cols + j];
  return s;
}

}  // namespace

double FbsdeProblem::explicit_y0() const {
  if (!explicit_y) throw std::logic_error(name + ": no explicit solution");
  Tensor x({1, n});
  for (std::size_t j = 0; j < n; ++j) x[j] = x0[j];
  return explicit_y(0.0, x)[0];
}

FbsdeProblem example1(std::size_t d, double T, double x0) {
  if (d < 1) throw std::invalid_argument("example1: d must be >= 1");
  FbsdeProblem p;
  p.name = "example1";
  p.n = d;
  p.m = 1;
  p.d = d;
  p.T = T;
  p.x0 = Tensor::full({d}, x0);
  const double c = (2.0 + 0.0625 * static_cast<double>(d)) /
                   (0.125 * static_cast<double>(d));

  p.b = [d](Tape& tp, double, Val x, Val, Val) { return zeros_like_batch(tp, x, d); };
  p.sigma = [d](Tape& tp, double, Val x, Val, Val) {
    Tensor diag({d * d});
    for (std::size_t i = 0; i < d; ++i) diag[i * d + i] = 0.25;
    return tp.repeat_rows(tp.constant(std::move(diag)), batch_rows(tp, x));
  };
  p.f = [c](Tape& tp, double, Val, Val y, Val z) {
    return tp.scale(tp.mul(tp.add_scalar(y, -c), tp.row_sum(z)), 0.25);
  };
  p.g = [T](Tape& tp, Val x) {
    Val e = tp.exp(tp.add_scalar(tp.row_sum(x), T));
    return tp.div(e, tp.add_scalar(e, 1.0));
  };
  p.explicit_y = [](double t, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) out[r] = sigmoid(t + row_total(x, r));
    return out;
  };
  p.explicit_z = [d](double t, const Tensor& x) {
    Tensor out({x.dim(0), d});
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const double s = sigmoid(t + row_total(x, r));
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] = 0.25 * s * (1.0 - s);
    }
    return out;
  };
  return p;
}

FbsdeProblem example2(std::size_t d, double T, double x0) {
  if (d < 2) throw std::invalid_argument("example2: d must be >= 2");
  FbsdeProblem p;
  p.name = "example2";
  p.n = d;
  p.m = 1;
  p.d = d;
  p.T = T;
  p.x0 = Tensor::full({d}, x0);

  // One-step cyclic column shift: (x S)_i = x_{(i+1) mod d}.
  Tensor shift({d, d});
  for (std::size_t i = 0; i < d; ++i) shift[((i + 1) % d) * d + i] = 1.0;

  p.b = [](Tape& tp, double t, Val x, Val y, Val) {
    return tp.scale(tp.square(tp.cos(tp.add_col_bcast(x, y))), 0.5 * t);
  };
  p.sigma = [](Tape& tp, double t, Val x, Val y, Val) {
    return tp.diag_embed(tp.scale(tp.square(tp.sin(tp.add_col_bcast(x, y))), 0.5 * t));
  };
  p.f = [d, shift](Tape& tp, double t, Val x, Val y, Val z) {
    const double dd = static_cast<double>(d);
    Val xs = tp.matmul(x, tp.constant(shift));
    Val ypx = tp.add_col_bcast(x, y);
    Val t1 = tp.row_sum(z);
    Val t2 = tp.scale(tp.row_sum(tp.square(x)), (1.0 + 0.5 * t) / dd);
    Val t3 = tp.scale(tp.row_sum(tp.mul(x, tp.add_scalar(xs, t))), t / dd);
    Val sin4 = tp.square(tp.square(tp.sin(ypx)));
    Val t4 = tp.scale(tp.row_sum(tp.mul(tp.add_scalar(xs, t), sin4)),
                      t * t / (2.0 * dd * dd));
    return tp.sub(tp.sub(tp.sub(t1, t2), t3), t4);
  };
  p.g = [d, shift, T](Tape& tp, Val x) {
    Val xs = tp.matmul(x, tp.constant(shift));
    return tp.scale(tp.row_sum(tp.mul(tp.square(x), tp.add_scalar(xs, T))),
                    1.0 / static_cast<double>(d));
  };
  auto value = [d](double t, const Tensor& x, std::size_t r) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[r * d + i];
      const double xn = x[r * d + (i + 1) % d];
      s += xi * xi * (xn + t);
    }
    return s / static_cast<double>(d);
  };
  p.explicit_y = [value](double t, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) out[r] = value(t, x, r);
    return out;
  };
  p.explicit_z = [d, value](double t, const Tensor& x) {
    // Z_i = du/dx_i * sigma_ii evaluated along the solution y = u(t,x).
    Tensor out({x.dim(0), d});
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const double u = value(t, x, r);
      for (std::size_t i = 0; i < d; ++i) {
        const double xi = x[r * d + i];
        const double xn = x[r * d + (i + 1) % d];
        const double xp = x[r * d + (i + d - 1) % d];
        const double du = (2.0 * xi * (xn + t) + xp * xp) / static_cast<double>(d);
        const double sii = 0.5 * t * std::pow(std::sin(u + xi), 2);
        out[r * d + i] = du * sii;
      }
    }
    return out;
  };
  return p;
}

FbsdeProblem example3() {
  FbsdeProblem p;
  p.name = "example3";
  p.n = p.m = p.d = 1;
  p.T = 0.1;
  p.x0 = Tensor({1}, {1.0});

  p.b = [](Tape& tp, double t, Val x, Val y, Val z) {
    Val sx = tp.add_scalar(x, t);
    return tp.scale(
        tp.mul(tp.mul(tp.sin(sx), tp.cos(sx)), tp.add(tp.square(y), z)), -0.5);
  };
  p.sigma = [](Tape& tp, double t, Val x, Val y, Val z) {
    Val sx = tp.add_scalar(x, t);
    Val inner = tp.add_scalar(tp.add(tp.mul(y, tp.sin(sx)), z), 1.0);
    return tp.scale(tp.mul(tp.cos(sx), inner), 0.5);
  };
  p.f = [](Tape& tp, double t, Val x, Val y, Val z) {
    return tp.sub(tp.mul(y, z), tp.cos(tp.add_scalar(x, t)));
  };
  p.g = [T = p.T](Tape& tp, Val x) { return tp.sin(tp.add_scalar(x, T)); };
  p.explicit_y = [](double t, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) out[r] = std::sin(t + x[r]);
    return out;
  };
  p.explicit_z = [](double t, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) {
      const double cz = std::cos(t + x[r]);
      out[r] = cz * cz;
    }
    return out;
  };
  return p;
}

FbsdeProblem example4(std::size_t d, double T, double x0) {
  if (d < 1) throw std::invalid_argument("example4: d must be >= 1");
  FbsdeProblem p;
  p.name = "example4";
  p.n = d;
  p.m = 1;
  p.d = d;
  p.T = T;
  p.x0 = Tensor::full({d}, x0);
  const double dd = static_cast<double>(d);

  p.b = [d](Tape& tp, double, Val x, Val, Val) { return zeros_like_batch(tp, x, d); };
  p.sigma = [dd](Tape& tp, double, Val x, Val, Val z) {
    Val e = tp.exp(tp.scale(tp.row_sum(x), -1.0 / dd));
    return tp.diag_embed(tp.mul_col_bcast(z, tp.scale(e, dd)));
  };
  p.f = [dd](Tape& tp, double, Val x, Val, Val z) {
    Val e = tp.exp(tp.scale(tp.row_sum(x), -1.0 / dd));
    return tp.scale(tp.mul(tp.row_sum(tp.square(z)), e), -1.0);
  };
  p.g = [dd](Tape& tp, Val x) { return tp.exp(tp.scale(tp.row_sum(x), 1.0 / dd)); };
  p.explicit_y = [dd](double, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r)
      out[r] = std::exp(row_total(x, r) / dd);
    return out;
  };
  p.explicit_z = [d](double, const Tensor& x) { return Tensor({x.dim(0), d}); };
  return p;
}

FbsdeProblem oracle_problem() {
  FbsdeProblem p;
  p.name = "oracle";
  p.n = p.m = p.d = 1;
  p.T = 1.0;
  p.x0 = Tensor({1});

  p.b = [](Tape& tp, double, Val x, Val, Val) { return zeros_like_batch(tp, x, 1); };
  p.sigma = [](Tape& tp, double, Val x, Val, Val) {
    return tp.constant(Tensor::full({batch_rows(tp, x), 1}, 1.0));
  };
  p.f = [](Tape& tp, double, Val x, Val, Val) { return zeros_like_batch(tp, x, 1); };
  p.g = [](Tape& tp, Val x) { return tp.square(x); };
  p.explicit_y = [](double t, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) out[r] = x[r] * x[r] + (1.0 - t);
    return out;
  };
  p.explicit_z = [](double, const Tensor& x) {
    Tensor out({x.dim(0), 1});
    for (std::size_t r = 0; r < x.dim(0); ++r) out[r] = 2.0 * x[r];
    return out;
  };
  return p;
}

std::vector<std::string> problem_names() {
  return {"example1", "example2", "example3", "example4", "oracle"};
}

FbsdeProblem problem_by_name(const std::string& name, std::optional<std::size_t> d,
                             std::optional<double> T, std::optional<double> x0) {
  auto reject_overrides = [&](const char* what) {
    if (d || T || x0)
      throw std::invalid_argument(std::string(what) +
                                  " has fixed dimensions; --d/--T/--x0 do not apply");
  };
  if (name == "example1") return example1(d.value_or(1), T.value_or(0.5), x0.value_or(0.0));
  if (name == "example2") return example2(d.value_or(5), T.value_or(0.1), x0.value_or(1.0));
  if (name == "example3") {
    reject_overrides("example3");
    return example3();
  }
  if (name == "example4")
    return example4(d.value_or(10), T.value_or(0.1), x0.value_or(1.0));
  if (name == "oracle") {
    reject_overrides("oracle");
    return oracle_problem();
  }
  std::string known;
  for (const auto& nm : problem_names()) known += " " + nm;
  throw std::invalid_argument("unknown problem '" + name + "'; available:" + known);
}

double terminal_consistency_gap(const FbsdeProblem& p, std::size_t samples,
                                std::uint64_t seed) {
  if (!p.explicit_y) throw std::logic_error(p.name + ": no explicit solution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x({samples, p.n});
  for (std::size_t r = 0; r < samples; ++r)
    for (std::size_t j = 0; j < p.n; ++j) x[r * p.n + j] = p.x0[j] + u(rng);
  Tape tp;
  const Tensor gv = tp.value(p.g(tp, tp.constant(x)));
  const Tensor yv = p.explicit_y(p.T, x);
  double worst = 0.0;
  for (std::size_t e = 0; e < gv.size(); ++e)
    worst = std::max(worst, std::abs(gv[e] - yv[e]));
  return worst;
}

}  // namespace fbsde
