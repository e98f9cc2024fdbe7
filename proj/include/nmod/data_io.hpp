#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmod/evolution.hpp"
#include "nmod/grn.hpp"
#include "nmod/modulation.hpp"
#include "nmod/optimizer.hpp"
#include "nmod/tensor.hpp"

namespace nmod::io {

// malformed input files, unreadable paths, out-of-range record fields
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageRecord {
  int label = 0;
  int coarse_label = 0;  // CIFAR-100 only; 0 otherwise
  std::array<std::uint8_t, 3072> pixels{};
};

struct Dataset {
  nn::Tensor inputs;  // (n, 3, 32, 32) for images, (n, d) for synthetic
  std::vector<int> labels;
  int n_classes = 0;

  int n() const { return inputs.rank() > 0 ? inputs.dim(0) : 0; }
};

// 3073-byte records: label byte then 3072 channel-planar pixel bytes
std::vector<ImageRecord> parse_cifar10(const std::vector<std::uint8_t>& bytes);
// 3074-byte records: coarse byte, fine byte, pixels; label holds the fine class
std::vector<ImageRecord> parse_cifar100(const std::vector<std::uint8_t>& bytes);

// pixels scaled by 1/255 into (n, 3, 32, 32)
Dataset records_to_dataset(const std::vector<ImageRecord>& records, int n_classes);

enum class SynthKind { Blobs, Spirals };

// deterministic per seed; class of sample i is i % n_classes, so counts are
// balanced within one
Dataset synth_dataset(SynthKind kind, int n, int n_classes, std::uint64_t seed,
                      double noise = 0.4);

struct GenomeFile {
  grn::Genome genome;
  opt::BaseKind base = opt::BaseKind::Sgd;
};

void save_genome(const std::string& path, const grn::Genome& genome, opt::BaseKind base);
GenomeFile load_genome(const std::string& path);

std::string format_real(double v);    // shortest round-trip decimal
std::string format_real17(double v);  // 17 significant digits

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

void write_history_csv(const std::string& path, const evo::EvolutionHistory& history);
void write_telemetry_csv(const std::string& path, const std::vector<mod::TelemetryRow>& rows,
                         int n_outputs);

}  // namespace nmod::io
