#include "lamecgo/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lamecgo {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_json(const fs::path& p, const ojson& j) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
  os << j.dump(2) << "\n";
}

ojson read_json(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + p.string());
  ojson j;
  is >> j;
  return j;
}

namespace {

fs::path strip_ext(const fs::path& base) {
  fs::path p = base;
  if (p.extension() == ".gfb" || p.extension() == ".gfz")
    p.replace_extension();
  return p;
}

ojson region_to_json(const Region& r) {
  ojson jr;
  jr["name"] = r.name;
  ojson full = ojson::array(), lo = ojson::array(), hi = ojson::array();
  for (int a = 0; a < 3; ++a) {
    full.push_back(r.r[a].full);
    lo.push_back(r.r[a].lo);
    hi.push_back(r.r[a].hi);
  }
  jr["full"] = full;
  jr["lo"] = lo;
  jr["hi"] = hi;
  return jr;
}

Region region_from_json(const ojson& jr) {
  Region r;
  r.name = jr.at("name").get<std::string>();
  for (int a = 0; a < 3; ++a) {
    r.r[a].full = jr.at("full").at(a).get<bool>();
    r.r[a].lo = jr.at("lo").at(a).get<int>();
    r.r[a].hi = jr.at("hi").at(a).get<int>();
  }
  return r;
}

}  // namespace

void write_field(const fs::path& base, const Field& f,
                 const std::vector<Region>& regions) {
  const fs::path stem = strip_ext(base);
  ojson j;
  j["format"] = "gfz-1";
  j["R"] = f.g.ax[0].half;
  j["N"] = f.g.ax[0].n;
  ojson halves = ojson::array(), ns = ojson::array();
  for (int a = 0; a < 3; ++a) {
    halves.push_back(f.g.ax[a].half);
    ns.push_back(f.g.ax[a].n);
  }
  j["half"] = halves;
  j["n"] = ns;
  j["rank"] = f.ncomp;
  ojson regs = ojson::array();
  for (const auto& r : regions) regs.push_back(region_to_json(r));
  j["region_masks"] = regs;
  write_json(fs::path(stem).concat(".gfz"), j);

  std::ofstream os(fs::path(stem).concat(".gfb"), std::ios::binary);
  if (!os)
    throw std::runtime_error("cannot open for writing: " + stem.string() +
                             ".gfb");
  // interleaved (re, im) float64, native little-endian layout
  os.write(reinterpret_cast<const char*>(f.v.data()),
           static_cast<std::streamsize>(f.v.size() * sizeof(cplx)));
}

LoadedField read_field(const fs::path& base) {
  const fs::path stem = strip_ext(base);
  const ojson j = read_json(fs::path(stem).concat(".gfz"));
  if (j.at("format").get<std::string>() != "gfz-1")
    throw std::runtime_error("unsupported field format in " + stem.string());
  LoadedField out;
  Grid g;
  for (int a = 0; a < 3; ++a) {
    g.ax[a].half = j.at("half").at(a).get<double>();
    g.ax[a].n = j.at("n").at(a).get<int>();
  }
  out.field = Field(g, j.at("rank").get<int>());
  for (const auto& jr : j.at("region_masks"))
    out.regions.push_back(region_from_json(jr));
  std::ifstream is(fs::path(stem).concat(".gfb"), std::ios::binary);
  if (!is)
    throw std::runtime_error("cannot open for reading: " + stem.string() +
                             ".gfb");
  is.read(reinterpret_cast<char*>(out.field.v.data()),
          static_cast<std::streamsize>(out.field.v.size() * sizeof(cplx)));
  if (!is)
    throw std::runtime_error("truncated field data: " + stem.string() +
                             ".gfb");
  return out;
}

void write_csv(const fs::path& p, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + p.string());
  for (size_t c = 0; c < header.size(); ++c)
    os << header[c] << (c + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c)
      os << format_double(row[c]) << (c + 1 < row.size() ? "," : "\n");
  }
}

}  // namespace lamecgo
