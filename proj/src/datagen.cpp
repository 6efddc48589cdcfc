#include "ccml/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ccml/rng.hpp"

namespace ccml {

std::string dgp_family_name(DgpFamily family) {
  switch (family) {
    case DgpFamily::AlaaA: return "alaa_a";
    case DgpFamily::AlaaB: return "alaa_b";
    case DgpFamily::NieA: return "nie_a";
    case DgpFamily::NieB: return "nie_b";
    case DgpFamily::NieC: return "nie_c";
    case DgpFamily::NieD: return "nie_d";
    case DgpFamily::IhdpOverlay: return "ihdp_overlay";
  }
  return "unknown";
}

std::optional<DgpFamily> parse_dgp_family(const std::string& name) {
  for (DgpFamily f : {DgpFamily::AlaaA, DgpFamily::AlaaB, DgpFamily::NieA,
                      DgpFamily::NieB, DgpFamily::NieC, DgpFamily::NieD,
                      DgpFamily::IhdpOverlay}) {
    if (dgp_family_name(f) == name) return f;
  }
  return std::nullopt;
}

bool is_nie(DgpFamily family) {
  return family == DgpFamily::NieA || family == DgpFamily::NieB ||
         family == DgpFamily::NieC || family == DgpFamily::NieD;
}

double beta24_cdf(double x) {
  x = std::clamp(x, 0.0, 1.0);
  const double r = 1.0 - x;
  const double r4 = r * r * r * r;
  return 1.0 - 5.0 * r4 + 4.0 * r4 * r;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

constexpr double kPi = 3.14159265358979323846;

void validate_spec(const DgpSpec& spec, Eigen::Index min_d) {
  if (spec.n < 1) throw std::invalid_argument("DgpSpec: n must be >= 1");
  if (spec.d != 0 && spec.d < min_d) {
    throw std::invalid_argument("DgpSpec: d below the family minimum");
  }
  if (spec.c < -1.0 || spec.c > 1.0) {
    throw std::invalid_argument("DgpSpec: c outside [-1, 1]");
  }
  if (!(spec.sigma > 0.0)) throw std::invalid_argument("DgpSpec: sigma must be > 0");
}

void compose_observed(SyntheticDataset& data) {
  data.ite_true = data.y1 - data.y0;
  data.y.resize(data.w.size());
  for (Eigen::Index i = 0; i < data.w.size(); ++i) {
    data.y[i] = data.w[i] == 1 ? data.y1[i] : data.y0[i];
  }
}

}  // namespace

double alaa_tau(double x0, double x1) {
  return (2.0 / (1.0 + std::exp(-12.0 * (x0 - 0.5)))) *
         (2.0 / (1.0 + std::exp(-12.0 * (x1 - 0.5))));
}

NieComponents nie_components(DgpFamily family,
                             const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const double x0 = x[0], x1 = x[1], x2 = x[2], x3 = x[3], x4 = x[4];
  switch (family) {
    case DgpFamily::NieA:
      return {std::sin(kPi * x0 * x1) + 2.0 * (x2 - 0.5) * (x2 - 0.5) + x3 + 0.5 * x4,
              std::clamp(std::sin(kPi * x0 * x1), 0.1, 0.9), (x0 + x1) / 2.0};
    case DgpFamily::NieB:
      return {std::max(0.0, x0 + x1 + x2) + std::max(0.0, x3 + x4), 0.5,
              x0 + softplus(x0)};
    case DgpFamily::NieC:
      return {2.0 * softplus(x0 + x1 + x2), 1.0 / (1.0 + std::exp(x0 + x1 + x2)), 1.0};
    case DgpFamily::NieD:
      return {(std::max(0.0, x0 + x1 + x2) + std::max(0.0, x3 + x4)) / 2.0,
              1.0 / (1.0 + std::exp(-x0) + std::exp(-x1)),
              std::max(0.0, x0 + x1 + x2) - std::max(0.0, x3 + x4)};
    default:
      throw std::invalid_argument("nie_components: not a Nie family");
  }
}

double ihdp_overlay_omega(const Eigen::MatrixXd& covariates,
                          const Eigen::VectorXi& treatment,
                          const Eigen::VectorXd& beta) {
  const Eigen::VectorXd xb = covariates * beta;
  const double shift = 0.5 * beta.sum();
  double gap = 0.0;
  int treated = 0;
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    if (treatment[i] == 1) {
      gap += xb[i] - std::exp(xb[i] + shift);
      ++treated;
    }
  }
  if (treated == 0) throw std::invalid_argument("ihdp_overlay_omega: no treated rows");
  return gap / treated - 4.0;
}

SyntheticDataset gen_alaa(const DgpSpec& spec) {
  if (spec.family != DgpFamily::AlaaA && spec.family != DgpFamily::AlaaB) {
    throw std::invalid_argument("gen_alaa: family must be alaa_a or alaa_b");
  }
  validate_spec(spec, 2);
  const Eigen::Index n = spec.n;
  const Eigen::Index d = spec.d == 0 ? 10 : spec.d;
  const double gamma = spec.family == DgpFamily::AlaaA ? 1.0 : 0.0;

  SplitRng root(spec.seed);
  SplitRng xs = root.stream("x");
  SplitRng noise = root.stream("noise");
  SplitRng treat = root.stream("treatment");

  SyntheticDataset data;
  data.X.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = xs.uniform();
  }
  data.w.resize(n);
  data.y0.resize(n);
  data.y1.resize(n);
  data.pi_true.resize(n);
  data.tau_true.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tau = alaa_tau(data.X(i, 0), data.X(i, 1));
    const double e0 = noise.normal();
    const double e1 = noise.normal();
    data.tau_true[i] = tau - gamma * tau;  // E[y1 - y0 | x]
    data.pi_true[i] = (1.0 + beta24_cdf(data.X(i, 0))) / 4.0;
    data.y0[i] = gamma * tau + e0;
    data.y1[i] = tau + e1;
    data.w[i] = treat.uniform() < data.pi_true[i] ? 1 : 0;
  }
  compose_observed(data);
  return data;
}

SyntheticDataset gen_nie(const DgpSpec& spec) {
  if (!is_nie(spec.family)) {
    throw std::invalid_argument("gen_nie: family must be one of nie_a..nie_d");
  }
  validate_spec(spec, 5);
  const Eigen::Index n = spec.n;
  const Eigen::Index d = spec.d == 0 ? 5 : spec.d;
  const double sigma = spec.sigma;
  const double c = spec.c;

  SplitRng root(spec.seed);
  SplitRng xs = root.stream("x");
  SplitRng noise = root.stream("noise");
  SplitRng treat = root.stream("treatment");

  SyntheticDataset data;
  data.X.resize(n, d);
  const bool uniform_x = spec.family == DgpFamily::NieA;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      data.X(i, j) = uniform_x ? xs.uniform() : xs.normal();
    }
  }
  data.w.resize(n);
  data.y0.resize(n);
  data.y1.resize(n);
  data.pi_true.resize(n);
  data.tau_true.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const NieComponents comp = nie_components(spec.family, data.X.row(i));
    const double e0 = sigma * noise.normal();
    const double fresh = sigma * noise.normal();
    const double e1 = c * e0 + (1.0 - c) * fresh;
    data.pi_true[i] = comp.pi;
    data.tau_true[i] = comp.tau;
    data.y0[i] = comp.b - 0.5 * comp.tau + e0;
    data.y1[i] = comp.b + 0.5 * comp.tau + e1;
    data.w[i] = treat.uniform() < comp.pi ? 1 : 0;
  }
  compose_observed(data);
  return data;
}

SyntheticDataset generate(const DgpSpec& spec) {
  if (spec.family == DgpFamily::IhdpOverlay) {
    throw std::invalid_argument("generate: ihdp_overlay needs external covariates");
  }
  return is_nie(spec.family) ? gen_nie(spec) : gen_alaa(spec);
}

SyntheticDataset gen_ihdp_overlay(const Eigen::MatrixXd& covariates,
                                  const Eigen::VectorXi& treatment,
                                  std::uint64_t seed) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index d = covariates.cols();
  if (treatment.size() != n) {
    throw std::invalid_argument("gen_ihdp_overlay: treatment length mismatch");
  }
  int treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (treatment[i] != 0 && treatment[i] != 1) {
      throw std::invalid_argument("gen_ihdp_overlay: treatment must be binary");
    }
    treated += treatment[i];
  }
  if (treated == 0 || treated == n) {
    throw std::invalid_argument("gen_ihdp_overlay: both arms must be present");
  }

  SplitRng root(seed);
  SplitRng beta_rng = root.stream("beta");
  SplitRng noise = root.stream("noise");

  Eigen::VectorXd beta(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double u = beta_rng.uniform();
    beta[j] = u < 0.6 ? 0.0 : u < 0.7 ? 0.1 : u < 0.8 ? 0.2 : u < 0.9 ? 0.3 : 0.4;
  }

  // Model means; omega solves mean over treated of (m1 - m0) = 4.
  const Eigen::VectorXd xb = covariates * beta;
  Eigen::VectorXd m0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m0[i] = std::exp(xb[i] + 0.5 * beta.sum());
  }
  const double omega = ihdp_overlay_omega(covariates, treatment, beta);

  SyntheticDataset data;
  data.X = covariates;
  data.w = treatment;
  data.y0.resize(n);
  data.y1.resize(n);
  data.pi_true = Eigen::VectorXd::Constant(n, static_cast<double>(treated) / n);
  data.tau_true.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m1 = xb[i] - omega;
    data.tau_true[i] = m1 - m0[i];
    data.y0[i] = m0[i] + noise.normal();
    data.y1[i] = m1 + noise.normal();
  }
  compose_observed(data);
  return data;
}

PropensityFn oracle_propensity(DgpFamily family) {
  switch (family) {
    case DgpFamily::AlaaA:
    case DgpFamily::AlaaB:
      return [](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        return (1.0 + beta24_cdf(x[0])) / 4.0;
      };
    case DgpFamily::NieA:
      return [](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        return std::clamp(std::sin(kPi * x[0] * x[1]), 0.1, 0.9);
      };
    case DgpFamily::NieB:
      return [](const Eigen::Ref<const Eigen::RowVectorXd>&) { return 0.5; };
    case DgpFamily::NieC:
      return [](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        return 1.0 / (1.0 + std::exp(x[0] + x[1] + x[2]));
      };
    case DgpFamily::NieD:
      return [](const Eigen::Ref<const Eigen::RowVectorXd>& x) {
        return 1.0 / (1.0 + std::exp(-x[0]) + std::exp(-x[1]));
      };
    case DgpFamily::IhdpOverlay:
      break;
  }
  throw std::invalid_argument("oracle_propensity: no oracle for this source");
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

struct CsvParser {
  const std::string& text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }

  // One RFC-4180 record; supports quoted fields and CRLF.
  std::vector<std::string> record() {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    while (pos < text.size()) {
      const char ch = text[pos];
      if (quoted) {
        if (ch == '"') {
          if (pos + 1 < text.size() && text[pos + 1] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            quoted = false;
          }
        } else {
          field.push_back(ch);
        }
        ++pos;
        continue;
      }
      if (ch == '"') {
        quoted = true;
        ++pos;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
        ++pos;
      } else if (ch == '\n' || ch == '\r') {
        if (ch == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
        ++pos;
        break;
      } else {
        field.push_back(ch);
        ++pos;
      }
    }
    fields.push_back(std::move(field));
    return fields;
  }
};

[[noreturn]] void csv_error(const std::string& origin, int data_row,
                            const std::string& column, const std::string& what) {
  std::ostringstream msg;
  msg << origin << ": csv parse error at row " << data_row << ", col " << column
      << ": " << what;
  throw std::runtime_error(msg.str());
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvParser parser{text};
  if (parser.done()) {
    throw std::runtime_error(origin + ": empty csv, header row required");
  }
  CsvTable table;
  table.columns = parser.record();
  if (table.columns.empty() || (table.columns.size() == 1 && table.columns[0].empty())) {
    throw std::runtime_error(origin + ": empty header row");
  }
  const std::size_t width = table.columns.size();

  std::vector<double> values;
  int data_row = 0;
  while (!parser.done()) {
    std::vector<std::string> fields = parser.record();
    if (fields.size() == 1 && fields[0].empty() && parser.done()) break;  // trailing newline
    ++data_row;
    if (fields.size() != width) {
      std::ostringstream msg;
      msg << origin << ": csv parse error at row " << data_row << ": ragged row, "
          << fields.size() << " fields, expected " << width;
      throw std::runtime_error(msg.str());
    }
    for (std::size_t j = 0; j < width; ++j) {
      const std::string& cell = fields[j];
      if (cell.empty()) csv_error(origin, data_row, table.columns[j], "missing value");
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        csv_error(origin, data_row, table.columns[j], "non-numeric cell '" + cell + "'");
      }
      values.push_back(v);
    }
  }

  table.values.resize(data_row, static_cast<Eigen::Index>(width));
  for (int i = 0; i < data_row; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      table.values(i, static_cast<Eigen::Index>(j)) =
          values[static_cast<std::size_t>(i) * width + j];
    }
  }
  return table;
}

CsvTable load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path);
}

CovariateFile load_covariates_csv(const std::string& path,
                                  const std::optional<std::string>& treatment_column) {
  CsvTable table = load_csv(path);
  CovariateFile out;
  Eigen::Index t_col = -1;
  if (treatment_column) {
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (table.columns[j] == *treatment_column) t_col = static_cast<Eigen::Index>(j);
    }
    if (t_col < 0) {
      throw std::runtime_error(path + ": treatment column '" + *treatment_column +
                               "' not found");
    }
  }
  const Eigen::Index n = table.values.rows();
  const Eigen::Index width = table.values.cols();
  out.X.resize(n, t_col >= 0 ? width - 1 : width);
  Eigen::Index xj = 0;
  for (Eigen::Index j = 0; j < width; ++j) {
    if (j == t_col) continue;
    out.X.col(xj) = table.values.col(j);
    out.columns.push_back(table.columns[static_cast<std::size_t>(j)]);
    ++xj;
  }
  if (t_col >= 0) {
    Eigen::VectorXi w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = table.values(i, t_col);
      if (v != 0.0 && v != 1.0) {
        throw std::runtime_error(path + ": treatment column must be binary, row " +
                                 std::to_string(i + 1));
      }
      w[i] = static_cast<int>(v);
    }
    out.treatment = std::move(w);
  }
  return out;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw std::runtime_error(path + ": cannot open for writing");
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j > 0) outf << ',';
    outf << table.columns[j];
  }
  outf << '\n';
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j > 0) outf << ',';
      outf << format_double(table.values(i, j));
    }
    outf << '\n';
  }
}

void write_dataset_csv(const std::string& path, const SyntheticDataset& data) {
  CsvTable table;
  const Eigen::Index d = data.X.cols();
  const bool truth = data.has_truth();
  for (Eigen::Index j = 0; j < d; ++j) table.columns.push_back("x" + std::to_string(j));
  table.columns.emplace_back("w");
  table.columns.emplace_back("y");
  if (truth) {
    for (const char* name : {"y0", "y1", "pi", "tau", "ite"}) {
      table.columns.emplace_back(name);
    }
  }
  table.values.resize(data.X.rows(), static_cast<Eigen::Index>(table.columns.size()));
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    Eigen::Index j = 0;
    for (; j < d; ++j) table.values(i, j) = data.X(i, j);
    table.values(i, j++) = data.w[i];
    table.values(i, j++) = data.y[i];
    if (truth) {
      table.values(i, j++) = data.y0[i];
      table.values(i, j++) = data.y1[i];
      table.values(i, j++) = data.pi_true[i];
      table.values(i, j++) = data.tau_true[i];
      table.values(i, j++) = data.ite_true[i];
    }
  }
  write_csv(path, table);
}

}  // namespace ccml
