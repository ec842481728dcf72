#include "support.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace testsupport {

namespace {

void extend(crsos::Heights& partial, int remaining, int slots,
            std::vector<crsos::Heights>& out) {
  if (slots == 0) {
    if (remaining == 0) {
      crsos::Heights full = partial;
      if (crsos::is_restricted(full)) out.push_back(std::move(full));
    }
    return;
  }
  for (int h = 0; h <= remaining; ++h) {
    partial.push_back(h);
    extend(partial, remaining - h, slots - 1, out);
    partial.pop_back();
  }
}

}  // namespace

std::vector<crsos::Heights> brute_force_configs(int n, int K) {
  std::vector<crsos::Heights> out;
  crsos::Heights partial;
  partial.reserve(static_cast<std::size_t>(n));
  extend(partial, K, n, out);
  return out;
}

Eigen::MatrixXd dense_generator(const crsos::StateSpace& space,
                                const crsos::RateTable& rates) {
  const auto size = static_cast<Eigen::Index>(space.size());
  Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const crsos::Heights& from = space.config(static_cast<std::size_t>(i));
    for (const crsos::MoveEvent& move : crsos::list_moves(from, rates)) {
      const auto j = space.index_of(crsos::apply_move(from, move));
      if (!j) throw std::logic_error("move left the enumerated space");
      gen(i, static_cast<Eigen::Index>(*j)) += move.rate;
      gen(i, i) -= move.rate;
    }
  }
  return gen;
}

Eigen::VectorXd uniformization(const Eigen::MatrixXd& gen,
                               const Eigen::VectorXd& p0, double t) {
  double rate = 0.0;
  for (Eigen::Index i = 0; i < gen.rows(); ++i)
    rate = std::max(rate, std::abs(gen(i, i)));
  if (rate * t == 0.0) return p0;
  const Eigen::MatrixXd uniform =
      Eigen::MatrixXd::Identity(gen.rows(), gen.cols()) + gen / rate;
  Eigen::VectorXd term = p0;
  double weight = std::exp(-rate * t);
  double covered = weight;
  Eigen::VectorXd result = weight * term;
  for (int m = 1; m < 200000 && covered < 1.0 - 1e-14; ++m) {
    term = uniform.transpose() * term;
    weight *= rate * t / m;
    result += weight * term;
    covered += weight;
  }
  return result;
}

double gammq(double a, double x) {
  if (!(a > 0.0) || x < 0.0)
    throw std::domain_error("gammq needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    // Lower series for P(a, x); Q = 1 - P.
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_prefactor);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(log_prefactor) * h;
}

double chi_square_p(double stat, int dof) {
  return gammq(0.5 * dof, 0.5 * stat);
}

double ks_exponential_p(std::vector<double> samples, double rate) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double dist = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = 1.0 - std::exp(-rate * samples[i]);
    dist = std::max(dist, std::abs(cdf - static_cast<double>(i) / n));
    dist = std::max(dist, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  const double root = std::sqrt(n);
  const double lambda = (root + 0.12 + 0.11 / root) * dist;
  double p = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    p += 2.0 * sign * term;
    sign = -sign;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

crsos::RateTable random_table(crsos::Xoshiro256& rng, double lo, double hi) {
  crsos::RateTable rates = crsos::RateTable::zeros();
  for (int dep = 1; dep <= 4; ++dep)
    for (int arr = 1; arr <= 4; ++arr)
      rates.span2[dep - 1][arr - 1] = lo + (hi - lo) * rng.uniform();
  rates.span1 = lo + (hi - lo) * rng.uniform();
  return rates;
}

crsos::RateTable mirror_symmetrize(const crsos::RateTable& rates) {
  // Reflection swaps the left-leaning and right-leaning window patterns:
  // departure classes 2 <-> 3 and arrival classes 2 <-> 3.
  const auto swap23 = [](int cls) {
    return cls == 2 ? 3 : (cls == 3 ? 2 : cls);
  };
  crsos::RateTable out = rates;
  for (int dep = 1; dep <= 4; ++dep)
    for (int arr = 1; arr <= 4; ++arr)
      out.span2[dep - 1][arr - 1] =
          0.5 * (rates.span2[dep - 1][arr - 1] +
                 rates.span2[swap23(dep) - 1][swap23(arr) - 1]);
  return out;
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string make_temp_dir(const std::string& tag) {
  const auto base = std::filesystem::temp_directory_path();
  std::string pattern = (base / (tag + ".XXXXXX")).string();
  if (!mkdtemp(pattern.data()))
    throw std::runtime_error("mkdtemp failed for " + pattern);
  return pattern;
}

}  // namespace testsupport
