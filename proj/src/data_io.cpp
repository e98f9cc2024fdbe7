#include "nmod/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nmod/rng.hpp"

namespace nmod::io {

namespace {

constexpr size_t kPixelBytes = 3072;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::vector<ImageRecord> parse_records(const std::vector<std::uint8_t>& bytes, size_t stride,
                                       bool has_coarse, const char* format_name) {
  if (bytes.size() % stride != 0) {
    std::ostringstream os;
    os << format_name << ": data length not multiple of " << stride << " (got " << bytes.size()
       << " bytes)";
    throw DataError(os.str());
  }
  const size_t n = bytes.size() / stride;
  std::vector<ImageRecord> records(n);
  const int label_max = has_coarse ? 99 : 9;
  for (size_t r = 0; r < n; ++r) {
    const size_t off = r * stride;
    ImageRecord& rec = records[r];
    size_t px = off;
    if (has_coarse) {
      rec.coarse_label = bytes[off];
      rec.label = bytes[off + 1];
      px = off + 2;
      if (rec.coarse_label > 19) {
        std::ostringstream os;
        os << format_name << ": record " << r << ": coarse label " << rec.coarse_label
           << " out of range at byte offset " << off;
        throw DataError(os.str());
      }
    } else {
      rec.label = bytes[off];
      px = off + 1;
    }
    if (rec.label > label_max) {
      std::ostringstream os;
      os << format_name << ": record " << r << ": label " << rec.label
         << " out of range at byte offset " << (px - 1);
      throw DataError(os.str());
    }
    std::memcpy(rec.pixels.data(), bytes.data() + px, kPixelBytes);
  }
  return records;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

double parse_real(const std::string& token, const std::string& path, size_t line_no) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = first + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    std::ostringstream os;
    os << path << ": line " << line_no << ": bad real value '" << token << "'";
    throw DataError(os.str());
  }
  return v;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<ImageRecord> parse_cifar10(const std::vector<std::uint8_t>& bytes) {
  return parse_records(bytes, 3073, false, "cifar-10");
}

std::vector<ImageRecord> parse_cifar100(const std::vector<std::uint8_t>& bytes) {
  return parse_records(bytes, 3074, true, "cifar-100");
}

Dataset records_to_dataset(const std::vector<ImageRecord>& records, int n_classes) {
  if (n_classes <= 0) throw std::invalid_argument("records_to_dataset: n_classes must be positive");
  if (records.empty()) throw std::invalid_argument("records_to_dataset: no records");
  const int n = static_cast<int>(records.size());
  Dataset ds;
  ds.n_classes = n_classes;
  ds.inputs = nn::Tensor(std::vector<int>{n, 3, 32, 32});
  ds.labels.resize(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    const ImageRecord& rec = records[static_cast<size_t>(r)];
    if (rec.label >= n_classes) {
      std::ostringstream os;
      os << "record " << r << ": label " << rec.label << " >= n_classes " << n_classes;
      throw DataError(os.str());
    }
    ds.labels[static_cast<size_t>(r)] = rec.label;
    double* dst = ds.inputs.data.data() + static_cast<size_t>(r) * kPixelBytes;
    for (size_t i = 0; i < kPixelBytes; ++i) dst[i] = rec.pixels[i] / 255.0;
  }
  return ds;
}

Dataset synth_dataset(SynthKind kind, int n, int n_classes, std::uint64_t seed, double noise) {
  if (n_classes < 1) throw std::invalid_argument("synth_dataset: n_classes must be >= 1");
  if (n < n_classes) throw std::invalid_argument("synth_dataset: n must be >= n_classes");
  if (noise < 0.0) throw std::invalid_argument("synth_dataset: noise must be >= 0");

  Dataset ds;
  ds.n_classes = n_classes;
  ds.inputs = nn::Tensor(std::vector<int>{n, 2});
  ds.labels.resize(static_cast<size_t>(n));
  Rng rng(seed);

  for (int i = 0; i < n; ++i) {
    const int k = i % n_classes;
    ds.labels[static_cast<size_t>(i)] = k;
    double x = 0.0, y = 0.0;
    if (kind == SynthKind::Blobs) {
      const double theta = 2.0 * std::numbers::pi * k / n_classes;
      x = 3.0 * std::cos(theta) + noise * rng.normal();
      y = 3.0 * std::sin(theta) + noise * rng.normal();
      x = (x + 5.0) / 10.0;
      y = (y + 5.0) / 10.0;
    } else {
      const int idx_in_class = i / n_classes;
      const int count = n / n_classes + (k < n % n_classes ? 1 : 0);
      const double t = count > 1 ? static_cast<double>(idx_in_class) / (count - 1) : 0.0;
      const double r = 0.1 + 1.1 * t;
      const double theta = 2.0 * std::numbers::pi * k / n_classes + 3.0 * std::numbers::pi * t;
      x = r * std::cos(theta) + 0.25 * noise * rng.normal();
      y = r * std::sin(theta) + 0.25 * noise * rng.normal();
      x = (x + 1.5) / 3.0;
      y = (y + 1.5) / 3.0;
    }
    ds.inputs.data[static_cast<size_t>(2 * i)] = clamp01(x);
    ds.inputs.data[static_cast<size_t>(2 * i + 1)] = clamp01(y);
  }
  return ds;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_real17(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

void save_genome(const std::string& path, const grn::Genome& genome, opt::BaseKind base) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "neuromod-genome 1\n";
  out << "base " << (base == opt::BaseKind::Sgd ? "sgd" : "adam") << "\n";
  out << "beta " << format_real17(genome.beta) << "\n";
  out << "delta " << format_real17(genome.delta) << "\n";
  for (const grn::Protein& p : genome.proteins) {
    const char* kind = p.kind == grn::ProteinKind::Input    ? "input"
                       : p.kind == grn::ProteinKind::Output ? "output"
                                                            : "regulator";
    out << kind << ' ' << format_real17(p.id) << ' ' << format_real17(p.enh) << ' '
        << format_real17(p.inh) << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

GenomeFile load_genome(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 4) throw DataError(path + ": truncated genome file");

  if (lines[0] != "neuromod-genome 1")
    throw DataError(path + ": unsupported genome file version: '" + lines[0] + "'");

  GenomeFile gf;
  {
    const auto toks = split_ws(lines[1]);
    if (toks.size() != 2 || toks[0] != "base" || (toks[1] != "sgd" && toks[1] != "adam"))
      throw DataError(path + ": line 2: expected 'base sgd|adam'");
    gf.base = toks[1] == "sgd" ? opt::BaseKind::Sgd : opt::BaseKind::Adam;
  }
  double beta = 0.0, delta = 0.0;
  {
    const auto toks = split_ws(lines[2]);
    if (toks.size() != 2 || toks[0] != "beta")
      throw DataError(path + ": line 3: expected 'beta <value>'");
    beta = parse_real(toks[1], path, 3);
  }
  {
    const auto toks = split_ws(lines[3]);
    if (toks.size() != 2 || toks[0] != "delta")
      throw DataError(path + ": line 4: expected 'delta <value>'");
    delta = parse_real(toks[1], path, 4);
  }

  std::vector<grn::Protein> inputs, outputs, regulators;
  for (size_t li = 4; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto toks = split_ws(lines[li]);
    if (toks.size() != 4) {
      std::ostringstream os;
      os << path << ": line " << (li + 1) << ": expected '<kind> <id> <enh> <inh>'";
      throw DataError(os.str());
    }
    grn::Protein p;
    p.id = parse_real(toks[1], path, li + 1);
    p.enh = parse_real(toks[2], path, li + 1);
    p.inh = parse_real(toks[3], path, li + 1);
    if (toks[0] == "input") {
      p.kind = grn::ProteinKind::Input;
      inputs.push_back(p);
    } else if (toks[0] == "output") {
      p.kind = grn::ProteinKind::Output;
      outputs.push_back(p);
    } else if (toks[0] == "regulator") {
      p.kind = grn::ProteinKind::Regulator;
      regulators.push_back(p);
    } else {
      std::ostringstream os;
      os << path << ": line " << (li + 1) << ": unknown protein kind '" << toks[0] << "'";
      throw DataError(os.str());
    }
  }

  gf.genome = grn::Genome::make(inputs, outputs, regulators, beta, delta);
  const auto problems = grn::validate_genome(gf.genome, grn::GrnConfig{});
  if (!problems.empty()) throw DataError(path + ": invalid genome: " + join(problems));
  return gf;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open '" + path + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size))
    throw DataError("read failed for '" + path + "'");
  return bytes;
}

void write_history_csv(const std::string& path, const evo::EvolutionHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "generation,best_fitness,mean_fitness,species_count,model_id,seed\n";
  for (const evo::GenerationStats& s : history) {
    out << s.generation << ',' << format_real(s.best) << ',' << format_real(s.mean) << ','
        << s.species_count << ',' << s.model_id << ',' << s.seed << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_telemetry_csv(const std::string& path, const std::vector<mod::TelemetryRow>& rows,
                         int n_outputs) {
  if (n_outputs < 0) throw std::invalid_argument("write_telemetry_csv: n_outputs must be >= 0");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "iteration,layer,group,loc,theta_mu,theta_sigma,grad_mu,grad_sigma,rel_size,"
         "next_loc,next_theta_mu,next_theta_sigma,next_grad_mu,next_grad_sigma,next_rel_size,"
         "const_in";
  for (int i = 0; i < n_outputs; ++i) out << ",out_" << i;
  out << "\n";
  for (const mod::TelemetryRow& row : rows) {
    if (static_cast<int>(row.outputs.size()) != n_outputs)
      throw std::invalid_argument("write_telemetry_csv: row output count mismatch");
    out << row.iteration << ',' << row.layer_index << ','
        << (row.group == nn::GroupKind::Weights ? "weights" : "biases");
    for (double v : row.inputs) out << ',' << format_real(v);
    for (double v : row.outputs) out << ',' << format_real(v);
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace nmod::io
