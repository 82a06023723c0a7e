#include "hvf/fields.hpp"

#include <fstream>
#include <sstream>

namespace hvf {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct LineCursor {
  const std::string& text;
  int line;
  size_t offset;  // column offset of text within the line

  [[noreturn]] void fail(const std::string& msg, size_t pos = 0) const {
    throw ParseError(msg, line, static_cast<int>(offset + pos) + 1);
  }
};

// Accepts C2, C{2}, C1,1, C{1,1}, Cinf.
Smoothness parse_smoothness(const std::string& tok, const LineCursor& cur, size_t pos) {
  std::string t;
  for (char c : tok) {
    if (c != '{' && c != '}' && c != ' ') t += c;
  }
  if (t.size() < 2 || t[0] != 'C') cur.fail("expected smoothness class like C2 or C1,1", pos);
  if (t == "Cinf") return Smoothness::infinite();
  Smoothness s;
  size_t comma = t.find(',');
  try {
    s.k = std::stoi(t.substr(1, comma == std::string::npos ? std::string::npos : comma - 1));
    if (comma != std::string::npos) {
      if (t.substr(comma + 1) != "1") cur.fail("only Lipschitz classes C{k,1} are supported", pos);
      s.lipschitz = true;
    }
  } catch (const std::logic_error&) {
    cur.fail("malformed smoothness class '" + tok + "'", pos);
  }
  if (s.k < 0) cur.fail("negative smoothness order", pos);
  return s;
}

Box parse_box(const std::string& v, const LineCursor& cur, size_t pos) {
  std::vector<double> lo, hi;
  size_t i = 0;
  while (i < v.size()) {
    while (i < v.size() && (v[i] == ' ' || v[i] == 'x' || v[i] == '*')) ++i;
    if (i >= v.size()) break;
    if (v[i] != '[') cur.fail("expected '[' in box", pos + i);
    size_t close = v.find(']', i);
    if (close == std::string::npos) cur.fail("unterminated interval", pos + i);
    std::string inner = v.substr(i + 1, close - i - 1);
    size_t comma = inner.find(',');
    if (comma == std::string::npos) cur.fail("interval needs two endpoints", pos + i);
    try {
      lo.push_back(std::stod(inner.substr(0, comma)));
      hi.push_back(std::stod(inner.substr(comma + 1)));
    } catch (const std::logic_error&) {
      cur.fail("malformed interval endpoint", pos + i);
    }
    if (!(lo.back() < hi.back())) cur.fail("interval must satisfy lo < hi", pos + i);
    i = close + 1;
  }
  Box b;
  b.lo = Point::Map(lo.data(), static_cast<int>(lo.size()));
  b.hi = Point::Map(hi.data(), static_cast<int>(hi.size()));
  return b;
}

std::vector<Expression> parse_components(const std::string& body, int dim, int expected, const LineCursor& cur, size_t pos) {
  std::vector<Expression> out;
  size_t start = 0;
  for (;;) {
    size_t semi = body.find(';', start);
    std::string part = body.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
    try {
      out.push_back(parse_expression(part, dim));
    } catch (const ParseError& e) {
      std::string msg = e.what();
      msg = msg.substr(0, msg.rfind(" at line"));
      cur.fail(msg, pos + start + static_cast<size_t>(e.column()) - 1);
    }
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (static_cast<int>(out.size()) != expected) {
    cur.fail("expected " + std::to_string(expected) + " components, found " + std::to_string(out.size()), pos);
  }
  return out;
}

}  // namespace

std::shared_ptr<VectorFieldSystem> parse_system(const std::string& text, const std::string& default_name) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  int dim = -1, nfields = -1, step = -1;
  bool free_flag = false;
  std::string name = default_name;
  std::optional<Box> domain, working;
  struct Pending {
    int index;
    std::string head;
    std::string body;
    size_t body_pos;
    int line;
    size_t head_pos;
  };
  std::vector<Pending> pending_fields, pending_functions;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    size_t lead = line.find_first_not_of(" \t");
    LineCursor cur{raw, line_no, 0};
    size_t colon = line.find(':');
    size_t eq = line.find('=');
    if (colon != std::string::npos && (eq == std::string::npos || colon < eq)) {
      std::string head = trim(line.substr(0, colon));
      std::string body = line.substr(colon + 1);
      if (head.rfind("field", 0) == 0) {
        std::istringstream hs(head.substr(5));
        int idx = -1;
        if (!(hs >> idx)) cur.fail("expected field index", lead + 5);
        std::string rest;
        std::getline(hs, rest);
        pending_fields.push_back({idx, trim(rest), body, colon + 1, line_no, lead});
      } else if (head.rfind("drift", 0) == 0) {
        pending_fields.push_back({0, trim(head.substr(5)), body, colon + 1, line_no, lead});
      } else if (head.rfind("function", 0) == 0) {
        pending_functions.push_back({0, trim(head.substr(8)), body, colon + 1, line_no, lead});
      } else {
        cur.fail("unknown declaration '" + head + "'", lead);
      }
      continue;
    }
    if (eq == std::string::npos) cur.fail("expected 'key = value' or a field declaration", lead);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    size_t vpos = line.find_first_not_of(" \t", eq + 1);
    auto as_int = [&](const std::string& v) {
      try {
        size_t used = 0;
        int k = std::stoi(v, &used);
        if (used != v.size()) cur.fail("expected an integer", vpos);
        return k;
      } catch (const std::logic_error&) {
        cur.fail("expected an integer", vpos);
      }
    };
    if (key == "dim") {
      dim = as_int(value);
      if (dim < 1 || dim > kMaxDim) cur.fail("dim must be in 1.." + std::to_string(kMaxDim), vpos);
    } else if (key == "nfields") {
      nfields = as_int(value);
      if (nfields < 1) cur.fail("nfields must be positive", vpos);
    } else if (key == "step") {
      step = as_int(value);
      if (step < 1) cur.fail("step must be positive", vpos);
    } else if (key == "domain") {
      domain = parse_box(value, cur, vpos);
    } else if (key == "working") {
      working = parse_box(value, cur, vpos);
    } else if (key == "name") {
      name = value;
    } else if (key == "free") {
      free_flag = value == "true" || value == "1" || value == "yes";
    } else {
      cur.fail("unknown key '" + key + "'", lead);
    }
  }
  if (dim < 0) throw ParseError("missing 'dim' header", line_no, 1);
  if (nfields < 0) throw ParseError("missing 'nfields' header", line_no, 1);
  if (step < 0) throw ParseError("missing 'step' header", line_no, 1);
  if (!domain) throw ParseError("missing 'domain' header", line_no, 1);
  if (domain->dim() != dim) throw ParseError("domain has " + std::to_string(domain->dim()) + " intervals, expected " + std::to_string(dim), line_no, 1);
  if (working && working->dim() != dim) throw ParseError("working box dimension mismatch", line_no, 1);

  std::vector<std::optional<FieldDef>> fields(nfields + 1);
  for (const auto& pf : pending_fields) {
    LineCursor cur{pf.head, pf.line, pf.head_pos};
    if (pf.index < 0 || pf.index > nfields) cur.fail("field index " + std::to_string(pf.index) + " out of range");
    if (fields[pf.index]) cur.fail("field " + std::to_string(pf.index) + " declared twice");
    std::istringstream hs(pf.head);
    std::string kw, cls;
    hs >> kw;
    if (kw != "smooth") cur.fail("expected 'smooth' before the smoothness class");
    std::getline(hs, cls);
    FieldDef f;
    f.smooth = parse_smoothness(trim(cls), cur, 0);
    LineCursor bcur{pf.body, pf.line, pf.body_pos};
    f.coeffs = parse_components(pf.body, dim, dim, bcur, 0);
    fields[pf.index] = std::move(f);
  }
  for (int i = 1; i <= nfields; ++i) {
    if (!fields[i]) throw ParseError("field " + std::to_string(i) + " not declared", line_no, 1);
  }
  std::shared_ptr<VectorFieldSystem> sys;
  try {
    sys = std::make_shared<VectorFieldSystem>(name, dim, step, std::move(fields), *domain, working);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no, 1);
  }
  sys->set_free_flag(free_flag);
  for (const auto& pf : pending_functions) {
    LineCursor cur{pf.head, pf.line, pf.head_pos};
    std::istringstream hs(pf.head);
    TestFunctionDef tf;
    if (!(hs >> tf.name)) cur.fail("function needs a name");
    std::string word;
    while (hs >> word) {
      if (word == "smooth") {
        std::string cls;
        hs >> cls;
        tf.smooth = parse_smoothness(cls, cur, 0);
      } else if (word == "support") {
        // One radius for a cube, or one per axis separated by commas.
        std::string spec;
        hs >> spec;
        std::vector<double> r;
        std::stringstream rs(spec);
        for (std::string item; std::getline(rs, item, ',');) {
          try {
            size_t used = 0;
            r.push_back(std::stod(item, &used));
            if (used != item.size()) r.back() = -1;
          } catch (const std::exception&) {
            r.push_back(-1);
          }
        }
        if (r.empty() || (r.size() != 1 && static_cast<int>(r.size()) != dim)) {
          cur.fail("support needs one radius or one per coordinate");
        }
        for (double v : r) {
          if (!(v > 0)) cur.fail("support radii must be positive");
        }
        Point h(dim);
        for (int j = 0; j < dim; ++j) h[j] = r.size() == 1 ? r[0] : r[j];
        tf.support = h;
      } else {
        cur.fail("unexpected word '" + word + "' in function declaration");
      }
    }
    LineCursor bcur{pf.body, pf.line, pf.body_pos};
    tf.expr = parse_components(pf.body, dim, 1, bcur, 0).front();
    sys->add_function(std::move(tf));
  }
  return sys;
}

std::shared_ptr<VectorFieldSystem> load_system_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open system file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  std::string stem = path;
  if (size_t slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (size_t dot = stem.find('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return parse_system(ss.str(), stem);
}

std::string format_system(const VectorFieldSystem& sys) {
  std::ostringstream o;
  auto box = [](const Box& b) {
    std::string s;
    for (int i = 0; i < b.dim(); ++i) {
      if (i) s += "x";
      std::ostringstream t;
      t.precision(17);
      t << "[" << b.lo[i] << "," << b.hi[i] << "]";
      s += t.str();
    }
    return s;
  };
  o << "name = " << sys.name() << "\n";
  o << "dim = " << sys.dim() << "\n";
  o << "nfields = " << sys.nfields() << "\n";
  o << "step = " << sys.step() << "\n";
  o << "domain = " << box(sys.domain()) << "\n";
  o << "working = " << box(sys.working()) << "\n";
  if (sys.free_flag()) o << "free = true\n";
  for (int i : sys.field_indices()) {
    const auto& f = sys.field(i);
    o << (i == 0 ? std::string("drift") : "field " + std::to_string(i)) << " smooth " << f.smooth.to_string() << ": ";
    for (size_t m = 0; m < f.coeffs.size(); ++m) o << (m ? " ; " : "") << to_string(f.coeffs[m]);
    o << "\n";
  }
  for (const auto& tf : sys.functions()) {
    o << "function " << tf.name << " smooth " << tf.smooth.to_string();
    if (tf.support) {
      const Point& h = *tf.support;
      std::ostringstream r;
      r.precision(17);
      if ((h.array() == h[0]).all()) {
        r << h[0];
      } else {
        for (int j = 0; j < h.size(); ++j) r << (j ? "," : "") << h[j];
      }
      o << " support " << r.str();
    }
    o << ": " << to_string(tf.expr) << "\n";
  }
  return o.str();
}

}  // namespace hvf
