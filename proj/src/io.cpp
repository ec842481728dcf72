#include "crsos/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crsos/errors.hpp"

namespace crsos {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail("cannot open " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(where + ": " + e.what());
  }
}

double number_field(const json& value, const std::string& key) {
  if (!value.is_number()) fail("'" + key + "' must be a number");
  return value.get<double>();
}

std::int64_t integer_field(const json& value, const std::string& key) {
  if (!value.is_number_integer()) fail("'" + key + "' must be an integer");
  return value.get<std::int64_t>();
}

std::string string_field(const json& value, const std::string& key) {
  if (!value.is_string()) fail("'" + key + "' must be a string");
  return value.get<std::string>();
}

void write_text_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + file.string());
}

void write_json_file(const fs::path& file, const json& doc) {
  write_text_file(file, doc.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// Rate table serialization
// ---------------------------------------------------------------------------

namespace {

/// Explicit-entry key "span2.d<i>.a<j>"; returns {0,0} if the key is not of
/// that shape.
ClassPair parse_span2_key(const std::string& key) {
  if (key.size() != 11 || key.rfind("span2.d", 0) != 0 || key[8] != '.' ||
      key[9] != 'a')
    return {0, 0};
  const int dep = key[7] - '0';
  const int arr = key[10] - '0';
  if (dep < 1 || dep > 4 || arr < 1 || arr > 4) return {0, 0};
  return {dep, arr};
}

double rate_value(const json& value, const std::string& key) {
  const double rate = number_field(value, key);
  if (!(rate >= 0.0) || !std::isfinite(rate))
    fail("'" + key + "' must be a finite nonnegative rate");
  return rate;
}

}  // namespace

RateTable rate_table_from_json(const json& doc) {
  if (!doc.is_object()) fail("rate table must be a JSON object");
  RateTable out = RateTable::zeros();
  if (const auto it = doc.find("preset"); it != doc.end()) {
    const std::string preset = string_field(*it, "preset");
    if (preset == "unit")
      out = RateTable::unit();
    else if (preset != "zeros")
      fail("unknown rate preset '" + preset + "'");
  }
  if (doc.contains("slide") && doc.contains("span1"))
    fail("'slide' and 'span1' name the same rate; give one");

  // Aliases first, explicit entries second, so the explicit ones win.
  for (const auto& [key, value] : doc.items()) {
    if (key == "preset" || parse_span2_key(key).dep != 0) continue;
    if (key == "slide" || key == "span1") {
      out.span1 = rate_value(value, key);
    } else if (key == "skip") {
      out.set_all_skips(rate_value(value, key));
    } else if (key.size() == 2 && (key[0] == 'c' || key[0] == 'd') &&
               key[1] >= '1' && key[1] <= '4') {
      const int i = key[1] - '0';
      if (key[0] == 'c')
        out.set_climb(i, rate_value(value, key));
      else
        out.set_descend(i, rate_value(value, key));
    } else {
      fail("unknown rate table key '" + key + "'");
    }
  }
  for (const auto& [key, value] : doc.items()) {
    const ClassPair pair = parse_span2_key(key);
    if (pair.dep == 0) continue;
    out.span2[pair.dep - 1][pair.arr - 1] = rate_value(value, key);
  }
  return out;
}

RateTable load_rate_table(const fs::path& file) {
  return rate_table_from_json(parse_json_text(slurp(file), file.string()));
}

json rate_table_to_json(const RateTable& rates) {
  json doc = json::object();
  for (int dep = 1; dep <= 4; ++dep)
    for (int arr = 1; arr <= 4; ++arr) {
      const std::string key =
          "span2.d" + std::to_string(dep) + ".a" + std::to_string(arr);
      doc[key] = rates.span2[dep - 1][arr - 1];
    }
  doc["span1"] = rates.span1;
  return doc;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

ExperimentConfig config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) fail("config must be a JSON object");
  static const std::set<std::string> known = {
      "engine", "n",    "K",     "rates",   "rates_path", "times",
      "t_end",  "replicas", "seed", "out",   "k_max",      "epsilon",
      "quadratic", "tolerances"};
  for (const auto& [key, value] : doc.items())
    if (!known.count(key)) fail("unknown config key '" + key + "'");

  ExperimentConfig c;
  // The engine may instead come from the command line, so it is optional
  // here; run_experiment rejects configs that never received one.
  if (doc.contains("engine")) {
    c.engine = string_field(doc["engine"], "engine");
    static const std::set<std::string> engines = {
        "enumerate", "exact",   "kmc",    "meanfield",
        "stationary", "selfsim", "compare"};
    if (!engines.count(c.engine)) fail("unknown engine '" + c.engine + "'");
  }

  if (doc.contains("n")) {
    const auto n = integer_field(doc["n"], "n");
    if (n < 1) fail("'n' must be positive");
    c.n = static_cast<int>(n);
  }
  if (doc.contains("K")) {
    const auto K = integer_field(doc["K"], "K");
    if (K < 1) fail("'K' must be positive");
    c.K = static_cast<int>(K);
  }

  if (doc.contains("rates_path"))
    c.rates_path = string_field(doc["rates_path"], "rates_path");
  if (doc.contains("rates")) {
    // Inline rates win; a rates_path alongside them is kept as provenance
    // and never read.
    c.rates = rate_table_from_json(doc["rates"]);
  } else if (c.rates_path) {
    fs::path p = *c.rates_path;
    if (p.is_relative()) p = base_dir / p;
    if (!fs::exists(p)) fail("rates file not found: " + p.string());
    c.rates = load_rate_table(p);
  }

  if (doc.contains("times")) {
    if (!doc["times"].is_array()) fail("'times' must be an array");
    for (const auto& v : doc["times"]) {
      const double t = number_field(v, "times");
      if (t < 0.0) fail("sample times must be nonnegative");
      if (!c.times.empty() && t < c.times.back())
        fail("sample times must be sorted");
      c.times.push_back(t);
    }
  }

  if (doc.contains("t_end")) {
    const double t = number_field(doc["t_end"], "t_end");
    if (!(t > 0.0)) fail("'t_end' must be positive");
    c.t_end = t;
  }
  if (!c.times.empty() && c.times.back() > c.resolved_t_end())
    fail("sample times must not exceed t_end");
  if (!(c.resolved_t_end() > 0.0)) fail("sample times must include one > 0");

  if (doc.contains("replicas")) {
    const auto r = integer_field(doc["replicas"], "replicas");
    if (r < 1) fail("'replicas' must be positive");
    c.replicas = static_cast<std::size_t>(r);
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer() && !doc["seed"].is_number_unsigned())
      fail("'seed' must be an integer");
    if (doc["seed"].is_number_integer() && doc["seed"].get<std::int64_t>() < 0)
      fail("'seed' must be nonnegative");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("out")) {
    c.out = string_field(doc["out"], "out");
    if (c.out.empty()) fail("'out' must not be empty");
  }
  if (doc.contains("k_max")) {
    const auto k = integer_field(doc["k_max"], "k_max");
    if (k < 4) fail("'k_max' must be at least 4");
    c.k_max = static_cast<int>(k);
  }
  if (doc.contains("epsilon")) {
    c.epsilon = number_field(doc["epsilon"], "epsilon");
    if (!(c.epsilon > 0.0)) fail("'epsilon' must be positive");
  }
  if (doc.contains("quadratic")) {
    const auto& q = doc["quadratic"];
    if (!q.is_array() || q.size() != 3)
      fail("'quadratic' must be [q2, q1, q0]");
    c.quadratic = QuadraticTriple{number_field(q[0], "quadratic"),
                                  number_field(q[1], "quadratic"),
                                  number_field(q[2], "quadratic")};
  }
  if (doc.contains("tolerances")) {
    const auto& tol = doc["tolerances"];
    if (!tol.is_object()) fail("'tolerances' must be an object");
    for (const auto& [key, value] : tol.items()) {
      const double v = number_field(value, key);
      if (!(v > 0.0)) fail("'" + key + "' must be positive");
      if (key == "tv_kmc")
        c.tolerances.tv_kmc = v;
      else if (key == "tv_mf")
        c.tolerances.tv_mf = v;
      else
        fail("unknown tolerance '" + key + "'");
    }
  }
  return c;
}

double ExperimentConfig::resolved_t_end() const {
  if (t_end) return *t_end;
  if (!times.empty()) return times.back();
  return engine == "selfsim" ? 1024.0 : 1.0;
}

ExperimentConfig load_config(const fs::path& file) {
  const json doc = parse_json_text(slurp(file), file.string());
  return config_from_json(doc, file.parent_path());
}

json config_to_json(const ExperimentConfig& config) {
  json doc = json::object();
  doc["engine"] = config.engine;
  doc["n"] = config.n;
  doc["K"] = config.K;
  doc["rates"] = rate_table_to_json(config.rates);
  if (config.rates_path) doc["rates_path"] = *config.rates_path;
  doc["times"] = config.times;
  if (config.t_end) doc["t_end"] = *config.t_end;
  doc["replicas"] = config.replicas;
  doc["seed"] = config.seed;
  doc["out"] = config.out;
  doc["k_max"] = config.k_max;
  doc["epsilon"] = config.epsilon;
  if (config.quadratic)
    doc["quadratic"] = {config.quadratic->q2, config.quadratic->q1,
                        config.quadratic->q0};
  doc["tolerances"] = {{"tv_kmc", config.tolerances.tv_kmc},
                       {"tv_mf", config.tolerances.tv_mf}};
  return doc;
}

std::vector<double> log_time_grid(double t0, double t1, int count) {
  if (!(t0 > 0.0) || !(t1 > t0)) throw std::invalid_argument("bad grid range");
  if (count < 2) throw std::invalid_argument("grid needs at least 2 points");
  std::vector<double> grid(count);
  const double a = std::log(t0), b = std::log(t1);
  for (int i = 0; i < count; ++i)
    grid[i] = std::exp(a + (b - a) * i / (count - 1));
  grid.front() = t0;
  grid.back() = t1;
  return grid;
}

std::vector<double> sample_grid(const ExperimentConfig& config) {
  if (!config.times.empty()) return config.times;
  if (config.engine == "enumerate" || config.engine == "stationary") return {};
  if (config.engine == "compare") return {config.resolved_t_end()};
  if (config.engine == "selfsim") {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i)
      grid.push_back(std::ldexp(config.resolved_t_end(), i - 10));
    return grid;
  }
  std::vector<double> grid{0.0};
  for (const double t : log_time_grid(config.resolved_t_end() / 256.0,
                                    config.resolved_t_end(), 9))
    grid.push_back(t);
  return grid;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string quoted = "\"";
  for (const char ch : cell) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  quoted += '"';
  return quoted;
}

void csv_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out += ',';
    out += csv_cell(row[i]);
  }
  out += '\n';
}

}  // namespace

std::string csv_to_string(const CsvTable& table) {
  std::string out;
  csv_row(out, table.header);
  for (const auto& row : table.rows) csv_row(out, row);
  return out;
}

void write_csv(const fs::path& file, const CsvTable& table) {
  write_text_file(file, csv_to_string(table));
}

CsvTable read_csv(const fs::path& file) {
  const std::string text = slurp(file);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool cell_open = false;  // something (possibly empty) pending on this line
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        in_quotes = false;
      } else {
        cell += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        cell_open = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        cell_open = true;
        break;
      case '\n':
        if (cell_open || !cell.empty() || !row.empty()) {
          row.push_back(std::move(cell));
          cell.clear();
          rows.push_back(std::move(row));
          row.clear();
        }
        cell_open = false;
        break;
      case '\r':
        break;
      default:
        cell += ch;
        cell_open = true;
        break;
    }
  }
  if (cell_open || !cell.empty() || !row.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  CsvTable table;
  if (!rows.empty()) {
    table.header = std::move(rows.front());
    table.rows.assign(std::make_move_iterator(rows.begin() + 1),
                      std::make_move_iterator(rows.end()));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Hashing and manifests
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (const unsigned char ch : bytes) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::uint64_t hash_file(const fs::path& file) { return fnv1a64(slurp(file)); }

json manifest_to_json(const RunManifest& manifest) {
  json doc = json::object();
  doc["config"] = manifest.config;
  doc["code_version"] = manifest.code_version;
  doc["wall_seconds"] = manifest.wall_seconds;
  doc["summary"] = manifest.summary;
  doc["output_hashes"] = manifest.output_hashes;
  return doc;
}

RunManifest manifest_from_json(const json& doc) {
  if (!doc.is_object()) fail("manifest must be a JSON object");
  for (const char* key :
       {"config", "code_version", "wall_seconds", "summary", "output_hashes"})
    if (!doc.contains(key)) fail(std::string("manifest lacks '") + key + "'");
  for (const auto& [key, value] : doc.items())
    if (key != "config" && key != "code_version" && key != "wall_seconds" &&
        key != "summary" && key != "output_hashes")
      fail("unknown manifest key '" + key + "'");
  RunManifest m;
  m.config = doc["config"];
  m.code_version = string_field(doc["code_version"], "code_version");
  m.wall_seconds = number_field(doc["wall_seconds"], "wall_seconds");
  m.summary = doc["summary"];
  if (!doc["output_hashes"].is_object()) fail("'output_hashes' must map files");
  for (const auto& [file, hash] : doc["output_hashes"].items())
    m.output_hashes[file] = string_field(hash, "output_hashes");
  return m;
}

// ---------------------------------------------------------------------------
// Cross-engine comparison
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd padded(const Eigen::VectorXd& v, Eigen::Index size) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size);
  out.head(v.size()) = v;
  return out;
}

double law_mean(const Eigen::VectorXd& p) {
  double mean = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) mean += k * p[k];
  return mean;
}

double law_variance(const Eigen::VectorXd& p) {
  const double mean = law_mean(p);
  double second = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    second += static_cast<double>(k) * k * p[k];
  return second - mean * mean;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::Index size = std::max(a.size(), b.size());
  return 0.5 * (padded(a, size) - padded(b, size)).lpNorm<1>();
}

CompareReport compare_report(const HeightDistribution& exact,
                             const HeightDistribution& kmc,
                             const HeightDistribution& mf,
                             const CompareTolerances& tolerances) {
  const Eigen::Index size =
      std::max({exact.p.size(), kmc.p.size(), mf.p.size()});
  CompareReport report;
  report.exact = padded(exact.p, size);
  report.kmc = padded(kmc.p, size);
  report.mf = padded(mf.p, size);
  report.kmc_diff = report.kmc - report.exact;
  report.mf_diff = report.mf - report.exact;
  report.tv_kmc = 0.5 * report.kmc_diff.lpNorm<1>();
  report.tv_mf = 0.5 * report.mf_diff.lpNorm<1>();
  report.tv_cross = 0.5 * (report.kmc - report.mf).lpNorm<1>();
  report.tolerances = tolerances;
  report.kmc_pass = report.tv_kmc <= tolerances.tv_kmc;
  report.mf_pass = report.tv_mf <= tolerances.tv_mf;
  report.pass = report.kmc_pass && report.mf_pass;
  return report;
}

json compare_to_json(const CompareReport& report) {
  json doc = json::object();
  doc["exact"] = vector_to_json(report.exact);
  doc["kmc"] = vector_to_json(report.kmc);
  doc["meanfield"] = vector_to_json(report.mf);
  doc["kmc_diff"] = vector_to_json(report.kmc_diff);
  doc["meanfield_diff"] = vector_to_json(report.mf_diff);
  doc["tv_exact_kmc"] = report.tv_kmc;
  doc["tv_exact_meanfield"] = report.tv_mf;
  doc["tv_kmc_meanfield"] = report.tv_cross;
  doc["tolerance_tv_kmc"] = report.tolerances.tv_kmc;
  doc["tolerance_tv_meanfield"] = report.tolerances.tv_mf;
  doc["kmc_pass"] = report.kmc_pass;
  doc["meanfield_pass"] = report.mf_pass;
  doc["pass"] = report.pass;
  return doc;
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  for (const char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void write_svg_plot(const fs::path& file, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<SvgSeries>& series,
                    const std::string& provenance) {
  constexpr double kWidth = 720, kHeight = 480;
  constexpr double kLeft = 72, kRight = 24, kTop = 48, kBottom = 56;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;

  const auto px = [&](double x) {
    return kLeft + (x - x_min) / (x_max - x_min) * plot_w;
  };
  const auto py = [&](double y) {
    return kTop + plot_h - (y - y_min) / (y_max - y_min) * plot_h;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 720 480\" "
         "font-family=\"sans-serif\" font-size=\"13\">\n";
  svg += "<!-- provenance: " + xml_escape(provenance) + " -->\n";
  for (const auto& s : series) {
    svg += "<!-- series \"" + xml_escape(s.label) + "\" x=[";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg += ' ';
      svg += format_double(s.x[i]);
    }
    svg += "] y=[";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (i) svg += ' ';
      svg += format_double(s.y[i]);
    }
    svg += "] -->\n";
  }
  svg += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
  svg += "<text x=\"360\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">" +
         xml_escape(title) + "</text>\n";

  // Axes with five ticks each.
  svg += "<g stroke=\"#444\" fill=\"none\">";
  svg += "<path d=\"M" + tick_label(kLeft) + " " + tick_label(kTop) + " V" +
         tick_label(kTop + plot_h) + " H" + tick_label(kLeft + plot_w) +
         "\"/>";
  svg += "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    const double yv = y_min + (y_max - y_min) * i / 4.0;
    svg += "<line x1=\"" + tick_label(px(xv)) + "\" y1=\"" +
           tick_label(kTop + plot_h) + "\" x2=\"" + tick_label(px(xv)) +
           "\" y2=\"" + tick_label(kTop + plot_h + 5) +
           "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + tick_label(px(xv)) + "\" y=\"" +
           tick_label(kTop + plot_h + 20) + "\" text-anchor=\"middle\">" +
           tick_label(xv) + "</text>\n";
    svg += "<line x1=\"" + tick_label(kLeft - 5) + "\" y1=\"" +
           tick_label(py(yv)) + "\" x2=\"" + tick_label(kLeft) + "\" y2=\"" +
           tick_label(py(yv)) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + tick_label(kLeft - 9) + "\" y=\"" +
           tick_label(py(yv) + 4) + "\" text-anchor=\"end\">" +
           tick_label(yv) + "</text>\n";
  }
  svg += "<text x=\"" + tick_label(kLeft + plot_w / 2) + "\" y=\"" +
         tick_label(kHeight - 12) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + tick_label(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         tick_label(kTop + plot_h / 2) + ")\">" + xml_escape(y_label) +
         "</text>\n";

  for (const auto& s : series) {
    if (s.x.empty()) continue;
    svg += "<polyline fill=\"none\" stroke=\"" + xml_escape(s.color) +
           "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (i) svg += ' ';
      svg += tick_label(px(s.x[i])) + "," + tick_label(py(s.y[i]));
    }
    svg += "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      svg += "<circle cx=\"" + tick_label(px(s.x[i])) + "\" cy=\"" +
             tick_label(py(s.y[i])) + "\" r=\"3\" fill=\"" +
             xml_escape(s.color) + "\"/>\n";
  }

  double legend_y = kTop + 14;
  for (const auto& s : series) {
    const double lx = kLeft + plot_w - 150;
    svg += "<line x1=\"" + tick_label(lx) + "\" y1=\"" + tick_label(legend_y) +
           "\" x2=\"" + tick_label(lx + 26) + "\" y2=\"" +
           tick_label(legend_y) + "\" stroke=\"" + xml_escape(s.color) +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + tick_label(lx + 32) + "\" y=\"" +
           tick_label(legend_y + 4) + "\">" + xml_escape(s.label) +
           "</text>\n";
    legend_y += 18;
  }
  svg += "</svg>\n";
  write_text_file(file, svg);
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

std::size_t state_cap() {
  const char* raw = std::getenv("CRSOS_STATE_CAP");
  if (!raw || !*raw) return kDefaultStateCap;
  std::size_t cap = 0;
  const char* end = raw + std::char_traits<char>::length(raw);
  const auto res = std::from_chars(raw, end, cap);
  if (res.ec != std::errc() || res.ptr != end || cap == 0)
    fail("CRSOS_STATE_CAP must be a positive integer, got '" +
         std::string(raw) + "'");
  return cap;
}

namespace {

std::string config_cell(const Heights& h) {
  std::string out = "(";
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(h[i]);
  }
  out += ')';
  return out;
}

/// Spatial height fractions of one configuration on a ladder 0..k_max.
Eigen::VectorXd fraction_profile(const Heights& h, int k_max) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(k_max + 1);
  for (const int height : h) {
    if (height > k_max) fail("k_max too small for the initial surface");
    p[height] += 1.0 / static_cast<double>(h.size());
  }
  return p;
}

json run_enumerate(const ExperimentConfig& config, const fs::path& out_dir,
                   std::vector<std::string>& files) {
  const StateSpace space = enumerate_configs(config.n, config.K, state_cap());
  CsvTable table;
  table.header = {"index", "config"};
  for (std::size_t i = 0; i < space.size(); ++i)
    table.rows.push_back({std::to_string(i), config_cell(space.config(i))});
  write_csv(out_dir / "configs.csv", table);
  files.push_back("configs.csv");
  return {{"count", space.size()}, {"max_height", max_height(space)}};
}

json run_exact(const ExperimentConfig& config, const fs::path& out_dir,
               std::vector<std::string>& files) {
  const StateSpace space = enumerate_configs(config.n, config.K, state_cap());
  const GeneratorMatrix gen = build_generator(space, config.rates);
  StateDistribution dist =
      delta_distribution(space, flat_config(config.n, config.K));
  const std::vector<double> times = sample_grid(config);

  CsvTable marginal{{"time", "k", "probability"}, {}};
  CsvTable observables{{"time", "mean_height", "width_sq"}, {}};
  for (const double t : times) {
    dist = evolve_forward(gen, dist, t - dist.time);
    const HeightDistribution h = one_site_marginal(space, dist, 0);
    for (Eigen::Index k = 0; k < h.p.size(); ++k)
      marginal.rows.push_back(
          {format_double(t), std::to_string(k), format_double(h.p[k])});
    observables.rows.push_back({format_double(t),
                                format_double(law_mean(h.p)),
                                format_double(law_variance(h.p))});
  }
  write_csv(out_dir / "marginal.csv", marginal);
  write_csv(out_dir / "observables.csv", observables);
  files.insert(files.end(), {"marginal.csv", "observables.csv"});

  const MarginalRateReport identity =
      marginal_rate_identity(space, dist, config.rates, 0);
  return {{"states", space.size()},
          {"mass_drift", std::abs(dist.p.sum() - 1.0)},
          {"min_probability", dist.p.minCoeff()},
          {"marginal_identity_residual", identity.residual}};
}

json run_kmc(const ExperimentConfig& config, const fs::path& out_dir,
             std::vector<std::string>& files) {
  const Heights init = flat_config(config.n, config.K);
  const std::vector<double> times = sample_grid(config);
  const EnsembleStats stats = ensemble(init, config.rates,
                                     config.resolved_t_end(),
                                       times, config.replicas, config.seed);

  CsvTable observables{{"time", "mean_height", "mean_height_se", "width_sq",
                        "width_sq_se"},
                       {}};
  CsvTable histogram{{"time", "k", "fraction", "fraction_se"}, {}};
  for (std::size_t s = 0; s < stats.times.size(); ++s) {
    observables.rows.push_back({format_double(stats.times[s]),
                                format_double(stats.mean_height[s]),
                                format_double(stats.mean_height_se[s]),
                                format_double(stats.width_sq[s]),
                                format_double(stats.width_sq_se[s])});
    const auto& frac = stats.site_fraction[s];
    for (Eigen::Index k = 0; k < frac.size(); ++k)
      histogram.rows.push_back({format_double(stats.times[s]),
                                std::to_string(k), format_double(frac[k]),
                                format_double(stats.site_fraction_se[s][k])});
  }
  write_csv(out_dir / "observables.csv", observables);
  write_csv(out_dir / "histogram.csv", histogram);
  files.insert(files.end(), {"observables.csv", "histogram.csv"});
  return {{"replicas", stats.replicas},
          {"absorbed", stats.absorbed},
          {"final_mean_height", stats.mean_height[stats.times.size() - 1]},
          {"final_width_sq", stats.width_sq[stats.times.size() - 1]}};
}

json run_meanfield(const ExperimentConfig& config, const fs::path& out_dir,
                   std::vector<std::string>& files) {
  MeanFieldParams prm = MeanFieldParams::from_table(config.rates);
  prm.k_max = config.k_max;
  const Eigen::VectorXd P0 =
      fraction_profile(flat_config(config.n, config.K), config.k_max);
  const std::vector<double> times = sample_grid(config);
  const std::vector<MeanFieldSample> samples = mf_evolve(P0, prm, times);

  CsvTable profile{{"time", "k", "probability"}, {}};
  CsvTable observables{
      {"time", "mean_height", "width_sq", "mass", "min_entry"}, {}};
  double worst_min = 0.0;
  for (const auto& sample : samples) {
    for (Eigen::Index k = 0; k < sample.P.size(); ++k)
      profile.rows.push_back({format_double(sample.time), std::to_string(k),
                              format_double(sample.P[k])});
    observables.rows.push_back({format_double(sample.time),
                                format_double(law_mean(sample.P)),
                                format_double(law_variance(sample.P)),
                                format_double(sample.mass),
                                format_double(sample.min_entry)});
    worst_min = std::min(worst_min, sample.min_entry);
  }
  write_csv(out_dir / "profile.csv", profile);
  write_csv(out_dir / "observables.csv", observables);
  files.insert(files.end(), {"profile.csv", "observables.csv"});
  return {{"k_max", config.k_max},
          {"final_mass_drift", samples.back().drift},
          {"min_entry", worst_min}};
}

json stats_json(const GeometricStats& stats) {
  // The geometric standard deviation doubles as the squared-width formula
  // in circulation for this model, so it is reported under both names.
  return {{"mean_height", stats.mean},
          {"width_variance", stats.variance},
          {"width_stddev", stats.width},
          {"width_sq_circulated", stats.width}};
}

json run_stationary(const ExperimentConfig& config, const fs::path& out_dir,
                    std::vector<std::string>& files) {
  const bool from_rates = !config.quadratic.has_value();
  const MeanFieldParams prm = MeanFieldParams::from_table(config.rates);
  json report = json::object();
  QuadraticTriple used{};
  if (from_rates) {
    const StationaryQuadratic sq = stationary_quadratic(prm);
    used = sq.collected;
    report["coefficients_source"] = "rate_table";
    report["negated_linear_variant"] = {sq.negated_linear.q2,
                                        sq.negated_linear.q1,
                                        sq.negated_linear.q0};
  } else {
    used = *config.quadratic;
    report["coefficients_source"] = "explicit";
  }
  const StationaryAnalysis analysis = solve_lambda(used);
  report["coefficients"] = {used.q2, used.q1, used.q0};
  report["discriminant"] = analysis.discriminant;
  report["roots"] = analysis.roots;
  report["roots_in_unit"] = analysis.roots_in_unit;
  report["phase"] = analysis.phase == RootPhase::none  ? "none"
                    : analysis.phase == RootPhase::one ? "one"
                                                       : "two";
  report["sign_diagnostics"] = {
      {"one_root_condition", analysis.one_root_signs},
      {"two_root_condition", analysis.two_root_signs}};

  json interior = json::array();
  for (std::size_t i = 0; i < analysis.roots_in_unit.size(); ++i) {
    const double root = analysis.roots_in_unit[i];
    json entry = stats_json(analysis.stats[i]);
    entry["lambda"] = root;
    entry["collected_value"] = used.eval(root);
    if (from_rates) {
      const StationaryQuadratic sq = stationary_quadratic(prm);
      entry["negated_linear_value"] = sq.negated_linear.eval(root);
      entry["bulk_residual"] = bulk_residual(prm, root);
    }
    interior.push_back(entry);
  }
  report["interior"] = interior;

  json summary = {{"phase", report["phase"]}};
  if (analysis.phase == RootPhase::one) {
    report["lambda"] = analysis.lambda;
    report.update(stats_json(analysis.stats[0]));
    summary["lambda"] = analysis.lambda;
    summary["mean_height"] = analysis.stats[0].mean;
  }
  write_json_file(out_dir / "report.json", report);
  files.push_back("report.json");
  return summary;
}

json run_selfsim(const ExperimentConfig& config, const fs::path& out_dir,
                 std::vector<std::string>& files) {
  const MeanFieldParams prm = MeanFieldParams::from_table(config.rates);
  const double A = continuum_coefficient_A(prm);
  if (!(A > 0.0))
    fail("the spreading solution needs a positive continuum coefficient; "
         "this rate table gives A = " +
         format_double(A));
  SelfSimilarParams sp;
  sp.A = A;
  sp.C1 = normalize_C1(A);
  sp.epsilon = config.epsilon;

  const std::vector<double> times = sample_grid(config);
  const MomentScalingReport moments =
      moment_scaling_report(sp, times, SupportMode::nonnegative);

  const double edge = support_edge(sp);
  std::vector<double> xs;
  for (int i = 0; i <= 20; ++i)
    xs.push_back(-0.9 * edge + 1.8 * edge * i / 20.0);
  const OdeResidualReport ode = similarity_ode_residual(sp, xs);

  CsvTable table{{"time", "abs_mean", "variance"}, {}};
  for (std::size_t i = 0; i < moments.times.size(); ++i)
    table.rows.push_back({format_double(moments.times[i]),
                          format_double(moments.abs_mean[i]),
                          format_double(moments.variance[i])});
  write_csv(out_dir / "moments.csv", table);

  const auto fit_json = [](const PowerLawFit& fit, double similarity,
                           double circulated) {
    return json{{"exponent", fit.exponent},
                {"log_prefactor", fit.log_prefactor},
                {"r_squared", fit.r_squared},
                {"similarity_prediction", similarity},
                {"circulated_claim", circulated}};
  };
  json report = {
      {"A", sp.A},
      {"C1", sp.C1},
      {"epsilon", sp.epsilon},
      {"gamma", sp.gamma},
      {"support_edge", edge},
      {"support_mode", "nonnegative"},
      {"abs_mean", fit_json(moments.abs_mean_fit, sp.gamma, 1.0 / 12.0)},
      {"variance", fit_json(moments.variance_fit, 2.0 * sp.gamma, 0.25)},
      {"ode_residual", {{"max_analytic", ode.max_analytic},
                        {"max_finite_diff", ode.max_finite_diff}}}};
  write_json_file(out_dir / "report.json", report);
  files.insert(files.end(), {"moments.csv", "report.json"});
  return {{"abs_mean_exponent", moments.abs_mean_fit.exponent},
          {"abs_mean_r_squared", moments.abs_mean_fit.r_squared},
          {"variance_exponent", moments.variance_fit.exponent},
          {"variance_r_squared", moments.variance_fit.r_squared},
          {"ode_residual_max", ode.max_analytic}};
}

json run_compare(const ExperimentConfig& config, const fs::path& out_dir,
                 std::vector<std::string>& files) {
  const StateSpace space = enumerate_configs(config.n, config.K, state_cap());
  const GeneratorMatrix gen = build_generator(space, config.rates);
  const Heights init = flat_config(config.n, config.K);
  const double t = config.resolved_t_end();

  const StateDistribution dist =
      evolve_forward(gen, delta_distribution(space, init), t);
  const HeightDistribution exact = one_site_marginal(space, dist, 0);

  const EnsembleStats stats = ensemble(init, config.rates, t, {t},
                                       config.replicas, config.seed);
  const HeightDistribution kmc{stats.site_fraction.at(0), t};

  MeanFieldParams prm = MeanFieldParams::from_table(config.rates);
  prm.k_max = std::max(config.K, 4);
  const Eigen::VectorXd P0 = fraction_profile(init, prm.k_max);
  const HeightDistribution mf{mf_evolve(P0, prm, {t}).front().P, t};

  // Widen the sampled tolerance to three multinomial standard-error
  // envelopes; replicas are treated as that many independent draws, which
  // overstates the error of the site-averaged histogram and is therefore
  // conservative.
  double envelope = 0.0;
  for (Eigen::Index k = 0; k < exact.p.size(); ++k)
    envelope += 0.5 * std::sqrt(std::max(0.0, exact.p[k] * (1.0 - exact.p[k]) /
                                                  config.replicas));
  CompareTolerances tolerances = config.tolerances;
  tolerances.tv_kmc = std::max(tolerances.tv_kmc, 3.0 * envelope);

  const CompareReport report = compare_report(exact, kmc, mf, tolerances);

  CsvTable table{{"k", "exact", "kmc", "kmc_se", "meanfield"}, {}};
  const Eigen::VectorXd kmc_se =
      padded(stats.site_fraction_se.at(0), report.exact.size());
  for (Eigen::Index k = 0; k < report.exact.size(); ++k)
    table.rows.push_back({std::to_string(k), format_double(report.exact[k]),
                          format_double(report.kmc[k]),
                          format_double(kmc_se[k]),
                          format_double(report.mf[k])});
  write_csv(out_dir / "distributions.csv", table);

  json doc = compare_to_json(report);
  doc["time"] = t;
  doc["replicas"] = config.replicas;
  doc["envelope_3se"] = 3.0 * envelope;
  doc["tolerance_tv_kmc_configured"] = config.tolerances.tv_kmc;
  write_json_file(out_dir / "report.json", doc);

  std::vector<SvgSeries> series(3);
  series[0].label = "exact";
  series[0].color = "#1b6ca8";
  series[1].label = "kmc";
  series[1].color = "#c0392b";
  series[2].label = "meanfield";
  series[2].color = "#277a3a";
  for (Eigen::Index k = 0; k < report.exact.size(); ++k) {
    const double kk = static_cast<double>(k);
    series[0].x.push_back(kk);
    series[0].y.push_back(report.exact[k]);
    series[1].x.push_back(kk);
    series[1].y.push_back(report.kmc[k]);
    series[2].x.push_back(kk);
    series[2].y.push_back(report.mf[k]);
  }
  const std::string provenance =
      "crsos " + std::string(kCodeVersion) + " compare n=" +
      std::to_string(config.n) + " K=" + std::to_string(config.K) +
      " t_end=" + format_double(t) +
      " replicas=" + std::to_string(config.replicas) +
      " seed=" + std::to_string(config.seed);
  write_svg_plot(out_dir / "overlay.svg", "one-site height law", "height k",
                 "probability", series, provenance);

  files.insert(files.end(), {"distributions.csv", "report.json",
                             "overlay.svg"});
  return {{"tv_exact_kmc", report.tv_kmc},
          {"tv_exact_meanfield", report.tv_mf},
          {"tv_kmc_meanfield", report.tv_cross},
          {"envelope_3se", 3.0 * envelope},
          {"kmc_pass", report.kmc_pass},
          {"meanfield_pass", report.mf_pass},
          {"pass", report.pass}};
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path out_dir = config.out;
  fs::create_directories(out_dir);

  std::vector<std::string> files;
  json summary;
  if (config.engine == "enumerate")
    summary = run_enumerate(config, out_dir, files);
  else if (config.engine == "exact")
    summary = run_exact(config, out_dir, files);
  else if (config.engine == "kmc")
    summary = run_kmc(config, out_dir, files);
  else if (config.engine == "meanfield")
    summary = run_meanfield(config, out_dir, files);
  else if (config.engine == "stationary")
    summary = run_stationary(config, out_dir, files);
  else if (config.engine == "selfsim")
    summary = run_selfsim(config, out_dir, files);
  else if (config.engine == "compare")
    summary = run_compare(config, out_dir, files);
  else
    fail("unknown engine '" + config.engine + "'");

  RunManifest manifest;
  manifest.config = config_to_json(config);
  manifest.code_version = kCodeVersion;
  manifest.summary = summary;
  for (const auto& file : files)
    manifest.output_hashes[file] = hex64(hash_file(out_dir / file));
  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_json_file(out_dir / "manifest.json", manifest_to_json(manifest));
  return manifest;
}

}  // namespace crsos
