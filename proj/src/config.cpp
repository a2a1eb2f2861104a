#include "vmv/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "vmv/csv.hpp"

namespace vmv {

const ConfigValue* ConfigValue::find(const std::string& key) const {
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i] == key) return &items[i];
  return nullptr;
}

const ConfigValue* ConfigSection::find(const std::string& key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e.value;
  return nullptr;
}

const ConfigSection* ConfigDocument::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> messages)
    : Error("invalid configuration:\n  " + join(messages, "\n  ")), messages_(std::move(messages)) {}

// ---------------------------------------------------------------- parser

namespace {

class Parser {
public:
  explicit Parser(const std::string& text) : s_(text) {}

  ConfigDocument run() {
    ConfigDocument doc;
    doc.sections.push_back({"", 0, {}});
    std::set<std::string> seen_sections;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      const int line = line_, col = col_;
      try {
        if (peek() == '[') {
          advance();
          skip_spaces();
          std::string name = parse_key();
          skip_spaces();
          expect(']');
          end_of_line();
          if (!seen_sections.insert(name).second)
            fail(line, col, "duplicate section [" + name + "]");
          doc.sections.push_back({name, line, {}});
        } else {
          std::string key = parse_key();
          skip_spaces();
          expect('=');
          skip_spaces();
          ConfigValue v = parse_value();
          end_of_line();
          auto& sec = doc.sections.back();
          if (sec.find(key))
            fail(line, col, "duplicate key '" + key + "'");
          sec.entries.push_back({key, std::move(v)});
        }
      } catch (const Failure&) {
        skip_to_next_line();
      }
    }
    if (!errors_.empty()) throw ConfigError(errors_);
    return doc;
  }

private:
  struct Failure {};

  [[noreturn]] void fail(int line, int col, const std::string& msg) {
    errors_.push_back("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
    throw Failure{};
  }
  [[noreturn]] void fail_here(const std::string& msg) { fail(line_, col_, msg); }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') advance();
  }
  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n') advance();
      else break;
    }
  }
  // Whitespace, comments and newlines inside brackets.
  void skip_all() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n') advance();
      else break;
    }
  }
  void skip_to_next_line() {
    while (!eof() && peek() != '\n') advance();
    if (!eof()) advance();
  }
  void expect(char c) {
    if (peek() != c) fail_here(std::string("expected '") + c + "'");
    advance();
  }
  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n') fail_here("unexpected text after value");
    advance();
  }

  std::string parse_key() {
    std::string key;
    auto ok = [](char c, bool first) {
      return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
             (!first && (std::isdigit(static_cast<unsigned char>(c)) || c == '-'));
    };
    while (!eof() && ok(peek(), key.empty())) {
      key += peek();
      advance();
    }
    if (key.empty()) fail_here("expected a key");
    return key;
  }

  ConfigValue parse_value() {
    ConfigValue v;
    v.line = line_;
    v.column = col_;
    const char c = peek();
    if (c == '"') {
      advance();
      v.kind = ConfigValue::Kind::string;
      while (!eof() && peek() != '"' && peek() != '\n') {
        if (peek() == '\\') {
          advance();
          const char e = peek();
          v.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
        } else {
          v.text += peek();
        }
        advance();
      }
      if (peek() != '"') fail(v.line, v.column, "unterminated string");
      advance();
      return v;
    }
    if (c == '[') {
      advance();
      v.kind = ConfigValue::Kind::list;
      skip_all();
      while (peek() != ']') {
        if (eof()) fail(v.line, v.column, "unterminated list");
        v.items.push_back(parse_value());
        skip_all();
        if (peek() == ',') {
          advance();
          skip_all();
        } else if (peek() != ']') {
          fail_here("expected ',' or ']' in list");
        }
      }
      advance();
      return v;
    }
    if (c == '{') {
      advance();
      v.kind = ConfigValue::Kind::table;
      skip_all();
      while (peek() != '}') {
        if (eof()) fail(v.line, v.column, "unterminated inline table");
        const int kl = line_, kc = col_;
        std::string key = parse_key();
        skip_spaces();
        expect('=');
        skip_all();
        if (v.find(key)) fail(kl, kc, "duplicate key '" + key + "' in inline table");
        v.keys.push_back(key);
        v.items.push_back(parse_value());
        skip_all();
        if (peek() == ',') {
          advance();
          skip_all();
        } else if (peek() != '}') {
          fail_here("expected ',' or '}' in inline table");
        }
      }
      advance();
      return v;
    }
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '.' ||
                      peek() == '+' || peek() == '-' || peek() == '_')) {
      tok += peek();
      advance();
    }
    if (tok == "true" || tok == "false") {
      v.kind = ConfigValue::Kind::boolean;
      v.boolean = tok == "true";
      return v;
    }
    if (tok.empty()) fail(v.line, v.column, "expected a value");
    double x = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (*first == '+') ++first;
    const auto res = std::from_chars(first, last, x);
    if (res.ec != std::errc() || res.ptr != last)
      fail(v.line, v.column, "cannot parse '" + tok + "' as a number, string, boolean, list or table");
    v.kind = ConfigValue::Kind::number;
    v.number = x;
    v.text = tok;
    return v;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::vector<std::string> errors_;
};

}  // namespace

ConfigDocument parse_config(const std::string& text) { return Parser(text).run(); }

// ------------------------------------------------------------- validator

namespace {

const std::vector<std::string> kKernelFamilies{"constant", "power", "fbm", "tabulated"};
const std::vector<std::string> kModels{"linear_mean_field"};

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::string quoted_list(const std::vector<std::string>& v) { return join(v, ", "); }

class Validator {
public:
  explicit Validator(const ConfigDocument& doc) : doc_(doc) {}

  ExperimentConfig run(const std::string& kind_override) {
    ExperimentConfig c;
    static const std::vector<std::pair<std::string, std::vector<std::string>>> schema{
        {"experiment", {"kind", "output", "workers"}},
        {"grid", {"T", "n_steps"}},
        {"model", {"name", "A", "B", "sigma0", "sigma1"}},
        {"kernels", {"K1", "K2", "Kc"}},
        {"run", {"N", "seed", "eps", "h_beta", "p", "xi", "xi_spread", "memory_limit_mb",
                 "write_ensemble"}},
        {"limit", {"method"}},
        {"resolvent", {"kernel", "method", "n_max", "tol", "stride"}},
        {"probe", {"kernel", "t", "h"}},
        {"rate", {"mode", "solver", "lambda_reg", "max_iter", "target", "event"}},
    };
    for (const auto& sec : doc_.sections) {
      if (sec.name == "manifest") continue;
      if (sec.name.empty()) {
        for (const auto& e : sec.entries)
          error(e.key, "keys must appear inside a [section]");
        continue;
      }
      auto it = std::find_if(schema.begin(), schema.end(),
                             [&](const auto& s) { return s.first == sec.name; });
      if (it == schema.end()) {
        std::vector<std::string> names;
        for (const auto& s : schema) names.push_back(s.first);
        errors_.push_back("line " + std::to_string(sec.line) + ": unknown section [" + sec.name +
                          "]; allowed: " + quoted_list(names));
        continue;
      }
      for (const auto& e : sec.entries)
        if (!contains(it->second, e.key))
          error(sec.name + "." + e.key, "unknown key; allowed: " + quoted_list(it->second));
    }

    // experiment
    c.kind = kind_override;
    if (auto v = get("experiment", "kind")) {
      std::string k;
      if (as_string(*v, "experiment.kind", k)) {
        if (!contains(experiment_kinds(), k))
          error("experiment.kind", "unknown kind \"" + k + "\"; allowed: " + quoted_list(experiment_kinds()));
        else if (!kind_override.empty() && k != kind_override)
          error("experiment.kind", "config kind \"" + k + "\" conflicts with subcommand \"" +
                                       kind_override + "\"");
        else
          c.kind = k;
      }
    }
    if (c.kind.empty()) error("experiment.kind", "missing; allowed: " + quoted_list(experiment_kinds()));
    if (auto v = get("experiment", "output")) as_string(*v, "experiment.output", c.output);
    if (auto v = get("experiment", "workers")) as_count(*v, "experiment.workers", c.workers, 0);

    // grid
    if (auto v = get("grid", "T"))
      if (as_number(*v, "grid.T", c.horizon) && !(c.horizon > 0.0)) error("grid.T", "must be positive");
    if (auto v = get("grid", "n_steps")) as_count(*v, "grid.n_steps", c.n_steps, 2);

    parse_model(c);

    // kernels
    if (auto v = get("kernels", "K1")) parse_kernel(*v, "kernels.K1", c.k1);
    if (auto v = get("kernels", "K2")) parse_kernel(*v, "kernels.K2", c.k2);
    if (auto v = get("kernels", "Kc")) {
      KernelSpec k;
      parse_kernel(*v, "kernels.Kc", k);
      c.kc = k;
    }

    // run
    if (auto v = get("run", "N")) as_count(*v, "run.N", c.n_particles, 1);
    if (auto v = get("run", "seed")) as_seed(*v, "run.seed", c.seed);
    if (auto v = get("run", "eps")) {
      if (number_list(*v, "run.eps", c.eps)) {
        if (c.eps.empty()) error("run.eps", "must not be empty");
        for (std::size_t i = 0; i < c.eps.size(); ++i)
          if (!(c.eps[i] > 0.0 && c.eps[i] <= 1.0))
            error("run.eps[" + std::to_string(i) + "]", "must lie in (0,1]");
      }
    }
    if (auto v = get("run", "h_beta"))
      if (as_number(*v, "run.h_beta", c.h_beta) && !(c.h_beta > 0.0 && c.h_beta < 0.5))
        error("run.h_beta", "must lie in (0,1/2)");
    if (auto v = get("run", "p")) {
      if (number_list(*v, "run.p", c.p)) {
        if (c.p.empty()) error("run.p", "must not be empty");
        for (std::size_t i = 0; i < c.p.size(); ++i)
          if (!(c.p[i] >= 1.0)) error("run.p[" + std::to_string(i) + "]", "must be at least 1");
      }
    }
    if (auto v = get("run", "xi")) number_list(*v, "run.xi", c.xi);
    if (c.xi.size() != c.model.d)
      error("run.xi", "must have " + std::to_string(c.model.d) + " component(s)");
    if (auto v = get("run", "xi_spread")) {
      if (number_list(*v, "run.xi_spread", c.xi_spread)) {
        if (c.xi_spread.size() != c.model.d)
          error("run.xi_spread", "must have " + std::to_string(c.model.d) + " component(s)");
        for (std::size_t i = 0; i < c.xi_spread.size(); ++i)
          if (!(c.xi_spread[i] >= 0.0)) error("run.xi_spread[" + std::to_string(i) + "]", "must be nonnegative");
      }
    }
    if (auto v = get("run", "memory_limit_mb"))
      if (as_number(*v, "run.memory_limit_mb", c.memory_limit_mb) && !(c.memory_limit_mb > 0.0))
        error("run.memory_limit_mb", "must be positive");
    if (auto v = get("run", "write_ensemble")) as_bool(*v, "run.write_ensemble", c.write_ensemble);

    // limit
    if (auto v = get("limit", "method"))
      one_of(*v, "limit.method", {"stepping", "picard"}, c.limit_method);

    // resolvent
    if (auto v = get("resolvent", "kernel"))
      one_of(*v, "resolvent.kernel", {"K1", "K2", "Kc"}, c.resolvent_kernel);
    if (auto v = get("resolvent", "method"))
      one_of(*v, "resolvent.method", {"direct", "series"}, c.resolvent_method);
    if (auto v = get("resolvent", "n_max")) as_count(*v, "resolvent.n_max", c.resolvent_n_max, 1);
    if (auto v = get("resolvent", "tol"))
      if (as_number(*v, "resolvent.tol", c.resolvent_tol) && !(c.resolvent_tol > 0.0))
        error("resolvent.tol", "must be positive");
    if (auto v = get("resolvent", "stride")) as_count(*v, "resolvent.stride", c.resolvent_stride, 1);

    // probe
    if (auto v = get("probe", "kernel")) one_of(*v, "probe.kernel", {"K1", "K2", "Kc"}, c.probe_kernel);
    if (auto v = get("probe", "t"))
      if (as_number(*v, "probe.t", c.probe_t) && !(c.probe_t > 0.0)) error("probe.t", "must be positive");
    if (auto v = get("probe", "h")) {
      if (number_list(*v, "probe.h", c.probe_h)) {
        if (c.probe_h.size() < 4) error("probe.h", "needs at least 4 step sizes");
        for (std::size_t i = 0; i < c.probe_h.size(); ++i)
          if (!(c.probe_h[i] > 0.0)) error("probe.h[" + std::to_string(i) + "]", "must be positive");
      }
    }

    // rate
    if (auto v = get("rate", "mode")) one_of(*v, "rate.mode", {"ldp", "mdp"}, c.rate_mode);
    if (auto v = get("rate", "solver")) one_of(*v, "rate.solver", {"triangular", "descent"}, c.rate_solver);
    if (auto v = get("rate", "lambda_reg"))
      if (as_number(*v, "rate.lambda_reg", c.lambda_reg) && !(c.lambda_reg >= 0.0))
        error("rate.lambda_reg", "must be nonnegative");
    if (auto v = get("rate", "max_iter")) as_count(*v, "rate.max_iter", c.max_iter, 1);
    if (auto v = get("rate", "target")) parse_target(*v, c.target);
    if (auto v = get("rate", "event")) parse_event(*v, c);
    if (c.event_normal.size() != c.model.d)
      error("rate.event.normal", "must have " + std::to_string(c.model.d) + " component(s)");

    if (!errors_.empty()) throw ConfigError(errors_);
    return c;
  }

private:
  const ConfigValue* get(const std::string& section, const std::string& key) const {
    const ConfigSection* s = doc_.find(section);
    return s ? s->find(key) : nullptr;
  }

  void error(const std::string& path, const std::string& msg) { errors_.push_back(path + " " + msg); }

  bool as_number(const ConfigValue& v, const std::string& path, double& out) {
    if (v.kind != ConfigValue::Kind::number || !std::isfinite(v.number)) {
      error(path, "must be a finite number");
      return false;
    }
    out = v.number;
    return true;
  }
  bool as_count(const ConfigValue& v, const std::string& path, std::size_t& out, std::size_t min) {
    double x = 0.0;
    if (!as_number(v, path, x)) return false;
    if (x != std::floor(x) || x < static_cast<double>(min) || x > 9.0e15) {
      error(path, "must be an integer >= " + std::to_string(min));
      return false;
    }
    out = static_cast<std::size_t>(x);
    return true;
  }
  void as_seed(const ConfigValue& v, const std::string& path, std::uint64_t& out) {
    std::uint64_t x = 0;
    const char* first = v.text.data();
    const char* last = first + v.text.size();
    if (v.kind != ConfigValue::Kind::number || std::from_chars(first, last, x).ptr != last) {
      error(path, "must be an integer in [0, 2^64)");
      return;
    }
    out = x;
  }
  bool as_string(const ConfigValue& v, const std::string& path, std::string& out) {
    if (v.kind != ConfigValue::Kind::string) {
      error(path, "must be a string");
      return false;
    }
    out = v.text;
    return true;
  }
  void as_bool(const ConfigValue& v, const std::string& path, bool& out) {
    if (v.kind != ConfigValue::Kind::boolean) {
      error(path, "must be true or false");
      return;
    }
    out = v.boolean;
  }
  void one_of(const ConfigValue& v, const std::string& path, const std::vector<std::string>& allowed,
              std::string& out) {
    std::string s;
    if (!as_string(v, path, s)) return;
    if (!contains(allowed, s)) {
      error(path, "unknown value \"" + s + "\"; allowed: " + quoted_list(allowed));
      return;
    }
    out = s;
  }
  // A scalar is accepted as a one-element list.
  bool number_list(const ConfigValue& v, const std::string& path, std::vector<double>& out) {
    std::vector<double> tmp;
    if (v.kind == ConfigValue::Kind::number) {
      double x;
      if (!as_number(v, path, x)) return false;
      tmp.push_back(x);
    } else if (v.kind == ConfigValue::Kind::list) {
      bool ok = true;
      for (std::size_t i = 0; i < v.items.size(); ++i) {
        double x = 0.0;
        ok = as_number(v.items[i], path + "[" + std::to_string(i) + "]", x) && ok;
        tmp.push_back(x);
      }
      if (!ok) return false;
    } else {
      error(path, "must be a number or a list of numbers");
      return false;
    }
    out = std::move(tmp);
    return true;
  }
  // Scalar (1 x 1), flat list (one row when `flat_is_row`, else one column)
  // or list of rows.
  bool matrix(const ConfigValue& v, const std::string& path, std::vector<double>& out,
              std::size_t& rows, std::size_t& cols, bool flat_is_row) {
    if (v.kind == ConfigValue::Kind::list && !v.items.empty() &&
        v.items[0].kind == ConfigValue::Kind::list) {
      rows = v.items.size();
      cols = v.items[0].items.size();
      out.clear();
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row;
        if (!number_list(v.items[r], path + "[" + std::to_string(r) + "]", row)) return false;
        if (row.size() != cols) {
          error(path, "rows must all have the same length");
          return false;
        }
        out.insert(out.end(), row.begin(), row.end());
      }
      if (cols == 0) {
        error(path, "must not be empty");
        return false;
      }
      return true;
    }
    std::vector<double> flat;
    if (!number_list(v, path, flat)) return false;
    if (flat.empty()) {
      error(path, "must not be empty");
      return false;
    }
    rows = flat_is_row ? 1 : flat.size();
    cols = flat_is_row ? flat.size() : 1;
    out = std::move(flat);
    return true;
  }

  void parse_model(ExperimentConfig& c) {
    ModelSpec& m = c.model;
    if (auto v = get("model", "name")) {
      std::string name;
      if (as_string(*v, "model.name", name)) {
        if (!contains(kModels, name)) error("model.name", "unknown model \"" + name + "\"; allowed: " + quoted_list(kModels));
        else m.name = name;
      }
    }
    std::size_t r = 1, k = 1;
    if (auto v = get("model", "A")) {
      if (matrix(*v, "model.A", m.A, r, k, false)) {
        if (r != k) error("model.A", "must be square");
        m.d = r;
      }
    }
    m.B.assign(m.d * m.d, 0.0);
    if (auto v = get("model", "B")) {
      if (matrix(*v, "model.B", m.B, r, k, false) && (r != m.d || k != m.d))
        error("model.B", "must be " + std::to_string(m.d) + " x " + std::to_string(m.d));
    }
    if (m.A.size() != m.d * m.d) m.A.assign(m.d * m.d, 0.0);
    // Default diffusion: identity with m = d.
    m.m = m.d;
    m.sigma0.assign(m.d * m.d, 0.0);
    for (std::size_t i = 0; i < m.d; ++i) m.sigma0[i * m.d + i] = 1.0;
    if (auto v = get("model", "sigma0")) {
      if (matrix(*v, "model.sigma0", m.sigma0, r, k, m.d == 1)) {
        if (r != m.d) error("model.sigma0", "must have " + std::to_string(m.d) + " row(s)");
        m.m = k;
      }
    }
    if (auto v = get("model", "sigma1")) {
      m.sigma1.clear();
      if (v->kind == ConfigValue::Kind::number) {
        if (m.d != 1 || m.m != 1) error("model.sigma1", "a scalar is only allowed when d = m = 1");
        else m.sigma1.push_back({v->number});
      } else if (v->kind == ConfigValue::Kind::list && v->items.size() == m.d) {
        for (std::size_t i = 0; i < m.d; ++i) {
          std::vector<double> block;
          const std::string p = "model.sigma1[" + std::to_string(i) + "]";
          if (matrix(v->items[i], p, block, r, k, m.d == 1) && (r != m.d || k != m.m))
            error(p, "must be " + std::to_string(m.d) + " x " + std::to_string(m.m));
          m.sigma1.push_back(block);
        }
      } else {
        error("model.sigma1", "must be a list of " + std::to_string(m.d) + " matrices of size " +
                                  std::to_string(m.d) + " x " + std::to_string(m.m));
      }
    }
  }

  void parse_kernel(const ConfigValue& v, const std::string& path, KernelSpec& k) {
    if (v.kind != ConfigValue::Kind::table) {
      error(path, "must be an inline table such as {family = \"power\", H = 0.75}");
      return;
    }
    for (const auto& key : v.keys)
      if (!contains({"family", "c", "H", "scale", "path"}, key))
        error(path + "." + key, "unknown key; allowed: family, c, H, scale, path");
    const ConfigValue* fam = v.find("family");
    if (!fam) {
      error(path + ".family", "missing; allowed families: " + quoted_list(kKernelFamilies));
      return;
    }
    std::string family;
    if (!as_string(*fam, path + ".family", family)) return;
    if (!contains(kKernelFamilies, family)) {
      error(path + ".family",
            "unknown kernel family \"" + family + "\"; allowed families: " + quoted_list(kKernelFamilies));
      return;
    }
    k.family = family;
    if (const auto* c = v.find("c")) as_number(*c, path + ".c", k.c);
    if (const auto* s = v.find("scale")) as_number(*s, path + ".scale", k.scale);
    if (family == "power" || family == "fbm") {
      const ConfigValue* h = v.find("H");
      if (!h) error(path + ".H", "missing (required for family " + family + ")");
      else if (as_number(*h, path + ".H", k.hurst) && !(k.hurst > 0.0 && k.hurst < 1.0))
        error(path + ".H", "must lie in (0,1)");
    }
    if (family == "tabulated") {
      const ConfigValue* p = v.find("path");
      if (!p) error(path + ".path", "missing (required for family tabulated)");
      else as_string(*p, path + ".path", k.path);
    }
  }

  void parse_target(const ConfigValue& v, TargetSpec& t) {
    const std::string path = "rate.target";
    if (v.kind != ConfigValue::Kind::table) {
      error(path, "must be an inline table such as {type = \"linear\", slope = 1.0}");
      return;
    }
    for (const auto& key : v.keys)
      if (!contains({"type", "slope", "amplitude", "rate", "control", "path"}, key))
        error(path + "." + key, "unknown key; allowed: type, slope, amplitude, rate, control, path");
    if (const auto* ty = v.find("type")) one_of(*ty, path + ".type", {"linear", "exp", "control", "file"}, t.type);
    if (const auto* x = v.find("slope")) as_number(*x, path + ".slope", t.slope);
    if (const auto* x = v.find("amplitude")) as_number(*x, path + ".amplitude", t.amplitude);
    if (const auto* x = v.find("rate")) as_number(*x, path + ".rate", t.rate);
    if (const auto* x = v.find("control")) as_number(*x, path + ".control", t.control);
    if (const auto* x = v.find("path")) as_string(*x, path + ".path", t.path);
    if (t.type == "file" && t.path.empty()) error(path + ".path", "missing (required for type file)");
  }

  void parse_event(const ConfigValue& v, ExperimentConfig& c) {
    const std::string path = "rate.event";
    if (v.kind != ConfigValue::Kind::table) {
      error(path, "must be an inline table such as {normal = [1.0], level = 1.0}");
      return;
    }
    for (const auto& key : v.keys)
      if (!contains({"normal", "level"}, key)) error(path + "." + key, "unknown key; allowed: normal, level");
    if (const auto* x = v.find("normal")) number_list(*x, path + ".normal", c.event_normal);
    if (const auto* x = v.find("level")) as_number(*x, path + ".level", c.event_level);
  }

  const ConfigDocument& doc_;
  std::vector<std::string> errors_;
};

std::string num(double v) { return format_number(v); }

std::string num_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

std::string rows(const std::vector<double>& v, std::size_t r, std::size_t c) {
  std::string s = "[";
  for (std::size_t i = 0; i < r; ++i) {
    s += i ? ", [" : "[";
    for (std::size_t j = 0; j < c; ++j) s += (j ? ", " : "") + num(v[i * c + j]);
    s += "]";
  }
  return s + "]";
}

std::string str(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out += ch;
  }
  return out + "\"";
}

std::string kernel_text(const KernelSpec& k) {
  std::string s = "{family = " + str(k.family);
  if (k.family == "constant") s += ", c = " + num(k.c);
  if (k.family == "power") s += ", H = " + num(k.hurst) + ", scale = " + num(k.scale);
  if (k.family == "fbm") s += ", H = " + num(k.hurst);
  if (k.family == "tabulated") s += ", path = " + str(k.path);
  return s + "}";
}

}  // namespace

ExperimentConfig validate_config(const std::string& text) {
  const ConfigDocument doc = parse_config(text);
  return Validator(doc).run("");
}

ExperimentConfig validate_config_for(const std::string& text, const std::string& kind) {
  const ConfigDocument doc = parse_config(text);
  return Validator(doc).run(kind);
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const ModelSpec& m = c.model;
  o << "[experiment]\n"
    << "kind = " << str(c.kind) << "\n"
    << "output = " << str(c.output) << "\n"
    << "workers = " << c.workers << "\n\n"
    << "[grid]\n"
    << "T = " << num(c.horizon) << "\n"
    << "n_steps = " << c.n_steps << "\n\n"
    << "[model]\n"
    << "name = " << str(m.name) << "\n"
    << "A = " << rows(m.A, m.d, m.d) << "\n"
    << "B = " << rows(m.B, m.d, m.d) << "\n"
    << "sigma0 = " << rows(m.sigma0, m.d, m.m) << "\n";
  if (!m.sigma1.empty()) {
    o << "sigma1 = [";
    for (std::size_t i = 0; i < m.sigma1.size(); ++i) o << (i ? ", " : "") << rows(m.sigma1[i], m.d, m.m);
    o << "]\n";
  }
  o << "\n[kernels]\n"
    << "K1 = " << kernel_text(c.k1) << "\n"
    << "K2 = " << kernel_text(c.k2) << "\n";
  if (c.kc) o << "Kc = " << kernel_text(*c.kc) << "\n";
  o << "\n[run]\n"
    << "N = " << c.n_particles << "\n"
    << "seed = " << c.seed << "\n"
    << "eps = " << num_list(c.eps) << "\n"
    << "h_beta = " << num(c.h_beta) << "\n"
    << "p = " << num_list(c.p) << "\n"
    << "xi = " << num_list(c.xi) << "\n";
  if (!c.xi_spread.empty()) o << "xi_spread = " << num_list(c.xi_spread) << "\n";
  o << "memory_limit_mb = " << num(c.memory_limit_mb) << "\n"
    << "write_ensemble = " << (c.write_ensemble ? "true" : "false") << "\n\n"
    << "[limit]\n"
    << "method = " << str(c.limit_method) << "\n\n"
    << "[resolvent]\n"
    << "kernel = " << str(c.resolvent_kernel) << "\n"
    << "method = " << str(c.resolvent_method) << "\n"
    << "n_max = " << c.resolvent_n_max << "\n"
    << "tol = " << num(c.resolvent_tol) << "\n"
    << "stride = " << c.resolvent_stride << "\n\n"
    << "[probe]\n"
    << "kernel = " << str(c.probe_kernel) << "\n"
    << "t = " << num(c.probe_t) << "\n"
    << "h = " << num_list(c.probe_h) << "\n\n"
    << "[rate]\n"
    << "mode = " << str(c.rate_mode) << "\n"
    << "solver = " << str(c.rate_solver) << "\n"
    << "lambda_reg = " << num(c.lambda_reg) << "\n"
    << "max_iter = " << c.max_iter << "\n"
    << "target = {type = " << str(c.target.type) << ", slope = " << num(c.target.slope)
    << ", amplitude = " << num(c.target.amplitude) << ", rate = " << num(c.target.rate)
    << ", control = " << num(c.target.control);
  if (!c.target.path.empty()) o << ", path = " << str(c.target.path);
  o << "}\n"
    << "event = {normal = " << num_list(c.event_normal) << ", level = " << num(c.event_level) << "}\n";
  return o.str();
}

}  // namespace vmv
