#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cpsgd/diagnostics.hpp"

namespace cpsgd {

namespace {

void put_double(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
    return;
  }
  if (std::isinf(v)) {
    out << (v > 0 ? "inf" : "-inf");
    return;
  }
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, end - buf);
}

}  // namespace

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> columns = {
      "k",  "consensus_error", "residual", "grad_norm_sq", "gap", "bits_cumulative", "V1", "V2",
      "V3", "V4",              "V5",       "U",            "eta", "gamma",           "omega"};
  return columns;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  const auto& columns = trace_columns();
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  for (const auto& r : trace.rows) {
    out << r.k << ',';
    put_double(out, r.consensus_error);
    out << ',';
    put_double(out, r.residual);
    out << ',';
    put_double(out, r.grad_norm_sq);
    out << ',';
    put_double(out, r.gap);
    out << ',' << r.bits_cumulative;
    for (double v : {r.lyapunov.v1, r.lyapunov.v2, r.lyapunov.v3, r.lyapunov.v4, r.lyapunov.v5, r.lyapunov.u,
                     r.eta, r.gamma, r.omega}) {
      out << ',';
      put_double(out, v);
    }
    out << '\n';
  }
}

std::string trace_csv(const Trace& trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot open " + tmp.string());
    out << contents;
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(Errc::IoError, "rename to " + target.string() + ": " + ec.message());
}

}  // namespace cpsgd
