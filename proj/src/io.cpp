#include "ncmfg/io.hpp"

#include "ncmfg/errors.hpp"

#include <boost/crc.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ncmfg {

std::uint32_t crc32_file(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io", "cannot read " + path.string());
  boost::crc_32_type crc;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    crc.process_bytes(buf, static_cast<std::size_t>(is.gcount()));
  }
  return crc.checksum();
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io", "cannot write " + path.string());
  os << text;
}

void write_json(const std::filesystem::path& path, const Json& j)
{
  write_text(path, j.dump(2) + "\n");
}

Json to_json(const Vec& v)
{
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_string(const std::string& text)
{
  std::vector<double> xs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      xs.push_back(std::stod(item, &pos));
      if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("expected comma-separated numbers, got '" + text + "'");
    }
  }
  if (xs.empty() || xs.size() > static_cast<std::size_t>(kMaxDim))
    throw ConfigError("expected 1 to 4 comma-separated numbers, got '" + text + "'");
  Vec v(static_cast<int>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) v[static_cast<int>(i)] = xs[i];
  return v;
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows)
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(fp, "%s%s", i ? "," : "", header[i].c_str());
  std::fputc('\n', fp);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) std::fprintf(fp, "%s%.17e", i ? "," : "", r[i]);
    std::fputc('\n', fp);
  }
  std::fclose(fp);
}

}  // namespace ncmfg
