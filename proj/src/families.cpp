#include "critkit/families.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "critkit/error.hpp"

namespace critkit {
namespace {

std::string coord_id(const std::vector<int>& x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(x[i]);
  }
  return s;
}

GraphForm lattice_box(int d, int R) {
  GraphSpec s;
  const int side = 2 * R + 1;
  std::size_t count = 1;
  for (int i = 0; i < d; ++i) count *= static_cast<std::size_t>(side);
  s.vertices.reserve(count);
  std::vector<int> x(static_cast<std::size_t>(d), -R);
  for (std::size_t k = 0; k < count; ++k) {
    const std::string id = coord_id(x);
    s.vertices.push_back(id);
    bool shell = false;
    for (int xi : x) shell |= std::abs(xi) == R;
    if (shell) s.dirichlet.push_back(id);
    for (int axis = 0; axis < d; ++axis) {
      if (x[static_cast<std::size_t>(axis)] == R) continue;
      std::vector<int> y = x;
      ++y[static_cast<std::size_t>(axis)];
      s.edges.push_back({id, coord_id(y), 1.0});
    }
    // Odometer increment.
    for (int axis = d - 1; axis >= 0; --axis) {
      auto& c = x[static_cast<std::size_t>(axis)];
      if (++c <= R) break;
      c = -R;
    }
  }
  return build_form(s);
}

GraphForm birth_death_chain(double beta, double scale, int R) {
  GraphSpec s;
  for (int n = 0; n <= R; ++n) s.vertices.push_back(std::to_string(n));
  for (int n = 0; n < R; ++n) {
    s.edges.push_back({std::to_string(n), std::to_string(n + 1), scale * std::pow(n + 1.0, beta)});
  }
  s.dirichlet = {std::to_string(R)};
  return build_form(s);
}

int to_int(const FamilyParams& p, const std::string& key, int fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadParams, "parameter " + key + " must be an integer, got '" + it->second + "'");
  }
}

double to_double(const FamilyParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size() || !std::isfinite(v)) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadParams, "parameter " + key + " must be a number, got '" + it->second + "'");
  }
}

std::vector<int> radii_param(const FamilyParams& p, std::vector<int> defaults) {
  if (auto it = p.find("radii"); it != p.end()) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(it->second);
    while (std::getline(in, item, it->second.find(':') != std::string::npos ? ':' : ',')) {
      FamilyParams one{{"radii", item}};
      out.push_back(to_int(one, "radii", 0));
    }
    return out;
  }
  const int max_r = to_int(p, "radius", 0);
  if (max_r > 0) {
    std::vector<int> out;
    for (int r : defaults)
      if (r <= max_r) out.push_back(r);
    if (out.empty() || out.back() != max_r) out.push_back(max_r);
    return out;
  }
  return defaults;
}

void check_radii(const std::vector<int>& radii, int min_radius) {
  if (radii.empty()) throw Error(ErrorCode::BadParams, "empty radius list");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (radii[i] < min_radius || (i > 0 && radii[i] <= radii[i - 1])) {
      throw Error(ErrorCode::BadParams, "radii must be increasing and >= " + std::to_string(min_radius));
    }
  }
}

void reject_unknown(const FamilyParams& p, std::initializer_list<const char*> known) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* name : known) ok |= k == name;
    if (!ok) throw Error(ErrorCode::BadParams, "unknown family parameter '" + k + "'");
  }
}

}  // namespace

std::vector<int> default_lattice_radii(int d) {
  switch (d) {
    case 1: {
      std::vector<int> r;
      for (int R = 10; R <= 200; R += 10) r.push_back(R);
      return r;
    }
    case 2:
      return {4, 6, 8, 12, 16, 24, 32, 48, 64};
    case 3:
      return {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    default:
      throw Error(ErrorCode::BadParams, "lattice dimension must be 1, 2 or 3");
  }
}

std::vector<int> default_birth_death_radii() { return {8, 16, 32, 64, 128, 256, 512, 1024}; }

Exhaustion lattice_family(int d, std::vector<int> radii) {
  if (d < 1 || d > 3) throw Error(ErrorCode::BadParams, "lattice dimension must be 1, 2 or 3");
  check_radii(radii, 1);
  Exhaustion e;
  e.generator = [d](int R) { return lattice_box(d, R); };
  e.radii = std::move(radii);
  e.root = coord_id(std::vector<int>(static_cast<std::size_t>(d), 0));
  e.label = "lattice d=" + std::to_string(d);
  return e;
}

Exhaustion birth_death_family(double beta, double scale, std::vector<int> radii) {
  if (!(scale > 0.0)) throw Error(ErrorCode::BadParams, "birth_death scale must be positive");
  check_radii(radii, 1);
  Exhaustion e;
  e.generator = [beta, scale](int R) { return birth_death_chain(beta, scale, R); };
  e.radii = std::move(radii);
  e.root = "0";
  std::ostringstream label;
  label << "birth_death beta=" << beta;
  e.label = label.str();
  return e;
}

Exhaustion dirichlet_path_family(int n) {
  if (n < 1) throw Error(ErrorCode::BadParams, "dirichlet_path needs N >= 1");
  GraphSpec s;
  for (int i = 0; i <= n; ++i) s.vertices.push_back(std::to_string(i));
  for (int i = 0; i < n; ++i) s.edges.push_back({std::to_string(i), std::to_string(i + 1), 1.0});
  s.dirichlet = {"0"};
  Exhaustion e = constant_exhaustion(build_form(s), "1");
  e.label = "dirichlet_path N=" + std::to_string(n);
  return e;
}

Exhaustion builtin_family(const std::string& name, const FamilyParams& params) {
  if (name == "lattice") {
    reject_unknown(params, {"d", "radius", "radii"});
    const int d = to_int(params, "d", 1);
    return lattice_family(d, radii_param(params, default_lattice_radii(d)));
  }
  if (name == "birth_death") {
    reject_unknown(params, {"beta", "scale", "radius", "radii"});
    return birth_death_family(to_double(params, "beta", 1.0), to_double(params, "scale", 1.0),
                              radii_param(params, default_birth_death_radii()));
  }
  if (name == "dirichlet_path") {
    reject_unknown(params, {"N"});
    return dirichlet_path_family(to_int(params, "N", 100));
  }
  throw Error(ErrorCode::UnknownFamily, "unknown family '" + name + "'");
}

}  // namespace critkit
