#pragma once

// Machine-readable audit reports and plot-data files. Reports are
// deterministic: ordered keys, numerics rounded to 10 significant digits
// before insertion, no wall-clock values unless the caller supplies a stamp.
// Re-rendering from the same inputs and seed is byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvb/csv.hpp"
#include "tvb/error.hpp"
#include "tvb/special.hpp"

namespace tvb {

using Json = nlohmann::ordered_json;

// Round-trips through the fixed 10-significant-digit formatting so that the
// serialized report does not depend on accumulated floating-point tails.
inline double round10(double x) {
  if (!std::isfinite(x)) return x;
  return std::stod(double_to_string_10sig(x));
}

inline Json jnum(double x) {
  if (std::isnan(x)) return nullptr;
  return round10(x);
}

struct BinomialCi {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval; well behaved at the extreme rates decile bins reach.
inline BinomialCi binomial_ci(std::int64_t successes, std::int64_t trials, double level = 0.95) {
  if (trials < 1 || successes < 0 || successes > trials)
    throw ValidationError("binomial_ci: need 0 <= successes <= trials, trials >= 1");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("binomial_ci: level must be in (0,1)");
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double n = static_cast<double>(trials);
  const double k = static_cast<double>(successes);
  const double z2 = z * z;
  const double center = (k + 0.5 * z2) / (n + z2);
  const double half = z * std::sqrt(k * (n - k) / n + 0.25 * z2) / (n + z2);
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct PlotTable {
  std::string name;  // file stem, e.g. "rate_bounds"
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct AuditReport {
  Json root;
  std::vector<PlotTable> tables;

  AuditReport() {
    root["schema_version"] = 1;
    root["metadata"] = Json::object();
  }

  void set_metadata(const std::string& key, const Json& value) { root["metadata"][key] = value; }
  void set_section(const std::string& name, Json section) { root[name] = std::move(section); }
  void add_table(PlotTable t) { tables.push_back(std::move(t)); }
};

// FNV-1a over the raw input bytes; provenance echo for the report metadata.
inline std::string fnv1a_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

enum class RenderFormat { kJson, kCsvBundle };

// json: <out>/audit.json. csv-bundle: audit.json plus one CSV per plot table.
inline std::vector<std::string> render(const AuditReport& report, RenderFormat format,
                                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::vector<std::string> written;

  const auto write_file = [&](const std::string& name, const std::string& body) {
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << body;
    if (!out) throw ValidationError("write failed: " + path);
    written.push_back(path);
  };

  write_file("audit.json", report.root.dump(2) + "\n");
  if (format == RenderFormat::kCsvBundle) {
    for (const auto& t : report.tables) {
      std::string body;
      {
        std::ostringstream os;
        write_csv_row(os, t.header);
        for (const auto& row : t.rows) write_csv_row(os, row);
        body = os.str();
      }
      write_file(t.name + ".csv", body);
    }
  }
  return written;
}

}  // namespace tvb
