#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nmod/data_io.hpp"
#include "nmod/evolution.hpp"
#include "nmod/grn.hpp"
#include "nmod/modulation.hpp"
#include "nmod/network.hpp"
#include "nmod/optimizer.hpp"

namespace nmod::harness {

// bad CLI flags, bad config keys/values, invalid run parameters
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scale { Paper, Desk };
enum class DatasetKind { Cifar10, Cifar100, Blobs, Spirals };

struct CatalogEntry {
  nn::ModelSpec spec;
  int preset_id = -1;  // index into the tuned-preset table; -1 when none exists
};

// image classification models; desk scale divides widths by 4 (floor 8)
std::vector<CatalogEntry> model_catalog(Scale scale, int n_out);
// small dense models for the synthetic surrogates
std::vector<CatalogEntry> synth_model_catalog(int n_out, int in_dim);

struct RunConfig {
  std::uint64_t seed = 0;
  opt::BaseKind base = opt::BaseKind::Sgd;
  DatasetKind dataset = DatasetKind::Blobs;
  std::string data_dir = ".";
  Scale scale = Scale::Desk;
  std::string model;  // empty -> first entry of the active catalog
  int epochs = 3;
  int batch_size = 128;
  int subset = 0;  // image datasets: keep the first N training records (0 = all)
  std::string out_dir = "out";
  nn::LossKind loss = nn::LossKind::MSE;
  int workers = 4;
  int synth_n = 200;
  double synth_noise = 0.4;
  int synth_classes = 2;
  evo::EvolutionConfig evolution;
};

RunConfig default_config();
// single `key=value` assignment; throws UsageError on unknown keys or bad values
void apply_config_entry(RunConfig& run, const std::string& key, const std::string& value);
RunConfig load_config_file(const std::string& path, RunConfig base);
std::string render_config(const RunConfig& run);
void validate_run(const RunConfig& run);  // UsageError

std::vector<CatalogEntry> active_catalog(const RunConfig& run);
CatalogEntry resolve_model(const RunConfig& run);

io::Dataset load_train_split(const RunConfig& run);
io::Dataset load_test_split(const RunConfig& run);

int batches_per_epoch(int n_samples, int batch_size);
std::vector<int> shuffled_indices(int n, std::uint64_t seed);
int sample_model_id(std::uint64_t master_seed, int generation, int n_models);

// dataset rows as a 4-d network input; flat rows become (n, 1, 1, d)
nn::Tensor dataset_tensor(const io::Dataset& ds);

struct MethodNm {
  grn::Genome genome;
};
struct MethodStub {
  std::vector<double> decoded;
};
struct MethodPreset {
  opt::Preset preset;
};
using TrainMethod = std::variant<MethodNm, MethodStub, MethodPreset>;

struct TrainRun {
  nn::ModelSpec model;
  opt::BaseKind base = opt::BaseKind::Sgd;
  nn::LossKind loss = nn::LossKind::MSE;
  int epochs = 1;
  int batch_size = 128;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  bool per_epoch_eval = false;
  grn::GrnConfig grn_config;
};

struct EpochStats {
  int epoch = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainOutcome {
  double final_train_accuracy = 0.0;
  std::vector<EpochStats> per_epoch;  // filled when per_epoch_eval is set
};

TrainOutcome train_once(const TrainRun& run, const io::Dataset& train, const io::Dataset* test,
                        const TrainMethod& method,
                        std::vector<mod::TelemetryRow>* telemetry = nullptr);

// trains the context's model with the candidate controller and scores the
// final-epoch accuracy on the training split it was handed
double fitness_eval(const grn::Genome& genome, const evo::GenerationContext& ctx,
                    const RunConfig& run, const io::Dataset& train,
                    const std::vector<CatalogEntry>& catalog);

struct EvolveOutput {
  evo::EvolveResult result;
  std::string genome_path;
  std::string history_path;
};

EvolveOutput cmd_evolve(const RunConfig& run);
std::string cmd_compare(const RunConfig& run, const std::string& genome_path);
std::string cmd_trace(const RunConfig& run, const std::string& genome_path);

}  // namespace nmod::harness
