#include "nmod/harness.hpp"

#include <algorithm>
#include <charconv>
#include <climits>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nmod/rng.hpp"

namespace nmod::harness {

namespace {

namespace fs = std::filesystem;

nn::ModelSpec image_model(const std::string& name, const std::vector<nn::LayerSpec>& layers,
                          int n_out) {
  nn::ModelSpec s;
  s.name = name;
  s.layers = layers;
  s.layers.push_back(nn::dense(n_out));
  s.n_out = n_out;
  s.in_channels = 3;
  s.in_height = 32;
  s.in_width = 32;
  return s;
}

int scaled(Scale scale, int width) {
  return scale == Scale::Paper ? width : std::max(8, width / 4);
}

long long parse_ll(const std::string& key, const std::string& value) {
  long long v = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw UsageError("config key '" + key + "': bad integer '" + value + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_ll(key, value);
  if (v < INT_MIN || v > INT_MAX)
    throw UsageError("config key '" + key + "': value out of range");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw UsageError("config key '" + key + "': bad unsigned integer '" + value + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw UsageError("config key '" + key + "': bad real '" + value + "'");
  return v;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

const char* dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Cifar100: return "cifar100";
    case DatasetKind::Blobs: return "blobs";
    default: return "spirals";
  }
}

io::Dataset cifar_split(const RunConfig& run, bool test) {
  std::vector<io::ImageRecord> records;
  const fs::path dir(run.data_dir);
  if (run.dataset == DatasetKind::Cifar10) {
    if (test) {
      records = io::parse_cifar10(io::read_file_bytes((dir / "test_batch.bin").string()));
    } else {
      for (int b = 1; b <= 5; ++b) {
        const auto name = "data_batch_" + std::to_string(b) + ".bin";
        auto part = io::parse_cifar10(io::read_file_bytes((dir / name).string()));
        records.insert(records.end(), part.begin(), part.end());
      }
    }
  } else {
    const char* name = test ? "test.bin" : "train.bin";
    records = io::parse_cifar100(io::read_file_bytes((dir / name).string()));
  }
  if (run.subset > 0) {
    const size_t keep =
        test ? static_cast<size_t>(std::max(1, run.subset / 4)) : static_cast<size_t>(run.subset);
    if (records.size() > keep) records.resize(keep);
  }
  const int n_classes = run.dataset == DatasetKind::Cifar10 ? 10 : 100;
  return io::records_to_dataset(records, n_classes);
}

io::Dataset synth_split(const RunConfig& run, bool test) {
  const io::SynthKind kind =
      run.dataset == DatasetKind::Blobs ? io::SynthKind::Blobs : io::SynthKind::Spirals;
  const int n = test ? std::max(run.synth_classes, run.synth_n / 4) : run.synth_n;
  const std::uint64_t seed = test ? derive_seed(run.seed, 7, 0) : derive_seed(run.seed, 8, 0);
  return io::synth_dataset(kind, n, run.synth_classes, seed, run.synth_noise);
}

void gather_batch(const io::Dataset& ds, const std::vector<int>& order, int lo, int hi,
                  nn::Tensor& batch, std::vector<int>& labels) {
  const nn::Tensor& src = ds.inputs;
  const size_t row = src.data.size() / static_cast<size_t>(src.dim(0));
  const int b = hi - lo;
  labels.resize(static_cast<size_t>(b));
  batch.shape[0] = b;
  batch.data.resize(static_cast<size_t>(b) * row);
  for (int i = 0; i < b; ++i) {
    const int s = order[static_cast<size_t>(lo + i)];
    std::memcpy(batch.data.data() + static_cast<size_t>(i) * row,
                src.data.data() + static_cast<size_t>(s) * row, row * sizeof(double));
    labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(s)];
  }
}

std::string method_label(opt::BaseKind base) {
  return base == opt::BaseKind::Sgd ? "sgd" : "adam";
}

void write_compare_csv(const std::string& path, const std::vector<std::string>& names,
                       const std::vector<TrainOutcome>& outcomes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::DataError("cannot open '" + path + "' for writing");
  out << "method,epoch,train_accuracy,test_accuracy\n";
  for (size_t m = 0; m < names.size(); ++m) {
    for (const EpochStats& e : outcomes[m].per_epoch) {
      out << names[m] << ',' << e.epoch << ',' << io::format_real(e.train_accuracy) << ','
          << io::format_real(e.test_accuracy) << "\n";
    }
  }
  if (!out) throw io::DataError("write failed for '" + path + "'");
}

}  // namespace

std::vector<CatalogEntry> model_catalog(Scale scale, int n_out) {
  const auto c = [&](int w) { return nn::conv(scaled(scale, w)); };
  const auto d = [&](int w) { return nn::dense(scaled(scale, w)); };
  const auto p = [] { return nn::maxpool(); };

  std::vector<CatalogEntry> out;
  out.push_back({image_model("m0",
                             {c(32), c(32), p(), c(64), c(64), p(), d(512)}, n_out),
                 0});
  out.push_back({image_model("m1",
                             {c(64), p(), c(128), p(), c(256), p(), c(512), p(), d(4096), d(4096)},
                             n_out),
                 1});
  out.push_back({image_model("m2",
                             {c(64), p(), c(128), p(), c(256), p(), c(512), p(), c(512), p(),
                              d(4096), d(4096)},
                             n_out),
                 2});
  return out;
}

std::vector<CatalogEntry> synth_model_catalog(int n_out, int in_dim) {
  std::vector<CatalogEntry> out;
  nn::ModelSpec a;
  a.name = "mlp0";
  a.layers = {nn::dense(16), nn::dense(n_out)};
  a.n_out = n_out;
  a.in_channels = 1;
  a.in_height = 1;
  a.in_width = in_dim;
  out.push_back({a, -1});

  nn::ModelSpec b = a;
  b.name = "mlp1";
  b.layers = {nn::dense(32), nn::dense(16), nn::dense(n_out)};
  out.push_back({b, -1});
  return out;
}

RunConfig default_config() { return RunConfig{}; }

void apply_config_entry(RunConfig& run, const std::string& key, const std::string& value) {
  if (key == "seed") {
    run.seed = parse_u64(key, value);
  } else if (key == "base") {
    if (value == "sgd") run.base = opt::BaseKind::Sgd;
    else if (value == "adam") run.base = opt::BaseKind::Adam;
    else throw UsageError("config key 'base': expected sgd|adam, got '" + value + "'");
  } else if (key == "dataset") {
    if (value == "cifar10") run.dataset = DatasetKind::Cifar10;
    else if (value == "cifar100") run.dataset = DatasetKind::Cifar100;
    else if (value == "blobs") run.dataset = DatasetKind::Blobs;
    else if (value == "spirals") run.dataset = DatasetKind::Spirals;
    else throw UsageError("config key 'dataset': expected cifar10|cifar100|blobs|spirals");
  } else if (key == "data_dir") {
    run.data_dir = value;
  } else if (key == "scale") {
    if (value == "paper") run.scale = Scale::Paper;
    else if (value == "desk") run.scale = Scale::Desk;
    else throw UsageError("config key 'scale': expected paper|desk");
  } else if (key == "model") {
    run.model = value;
  } else if (key == "epochs") {
    run.epochs = parse_int(key, value);
  } else if (key == "batch_size") {
    run.batch_size = parse_int(key, value);
  } else if (key == "subset") {
    run.subset = parse_int(key, value);
  } else if (key == "out") {
    run.out_dir = value;
  } else if (key == "loss") {
    if (value == "mse") run.loss = nn::LossKind::MSE;
    else if (value == "ce") run.loss = nn::LossKind::CrossEntropy;
    else throw UsageError("config key 'loss': expected mse|ce");
  } else if (key == "workers") {
    run.workers = parse_int(key, value);
  } else if (key == "synth_n") {
    run.synth_n = parse_int(key, value);
  } else if (key == "synth_noise") {
    run.synth_noise = parse_real(key, value);
  } else if (key == "synth_classes") {
    run.synth_classes = parse_int(key, value);
  } else if (key == "population") {
    run.evolution.population_size = parse_int(key, value);
  } else if (key == "generations") {
    run.evolution.generations = parse_int(key, value);
  } else if (key == "speciation_threshold") {
    run.evolution.speciation_threshold = parse_real(key, value);
  } else if (key == "tournament_size") {
    run.evolution.tournament_size = parse_int(key, value);
  } else if (key == "elite_count") {
    run.evolution.elite_count = parse_int(key, value);
  } else if (key == "p_crossover") {
    run.evolution.p_crossover = parse_real(key, value);
  } else if (key == "p_add_protein") {
    run.evolution.p_add_protein = parse_real(key, value);
  } else if (key == "p_remove_protein") {
    run.evolution.p_remove_protein = parse_real(key, value);
  } else if (key == "p_mutate_tag") {
    run.evolution.p_mutate_tag = parse_real(key, value);
  } else if (key == "p_mutate_dynamics") {
    run.evolution.p_mutate_dynamics = parse_real(key, value);
  } else if (key == "initial_regulators") {
    run.evolution.initial_regulators = parse_int(key, value);
  } else if (key == "tag_mutation_sigma") {
    run.evolution.tag_mutation_sigma = parse_real(key, value);
  } else if (key == "steps_per_query") {
    run.evolution.grn.steps_per_query = parse_int(key, value);
  } else if (key == "affinity_mode") {
    if (value == "relative") run.evolution.grn.affinity_mode = grn::AffinityMode::RelativeMax;
    else if (value == "literal") run.evolution.grn.affinity_mode = grn::AffinityMode::PaperLiteral;
    else throw UsageError("config key 'affinity_mode': expected relative|literal");
  } else if (key == "u_size") {
    run.evolution.grn.u_size = parse_real(key, value);
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw io::DataError("cannot open config file '" + path + "'");
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ": line " + std::to_string(line_no) + ": expected key=value");
    apply_config_entry(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

std::string render_config(const RunConfig& run) {
  std::ostringstream os;
  os << "seed=" << run.seed << "\n";
  os << "base=" << (run.base == opt::BaseKind::Sgd ? "sgd" : "adam") << "\n";
  os << "dataset=" << dataset_name(run.dataset) << "\n";
  os << "data_dir=" << run.data_dir << "\n";
  os << "scale=" << (run.scale == Scale::Paper ? "paper" : "desk") << "\n";
  os << "model=" << (run.model.empty() ? active_catalog(run)[0].spec.name : run.model) << "\n";
  os << "epochs=" << run.epochs << "\n";
  os << "batch_size=" << run.batch_size << "\n";
  os << "subset=" << run.subset << "\n";
  os << "out=" << run.out_dir << "\n";
  os << "loss=" << (run.loss == nn::LossKind::MSE ? "mse" : "ce") << "\n";
  os << "workers=" << run.workers << "\n";
  os << "synth_n=" << run.synth_n << "\n";
  os << "synth_noise=" << io::format_real(run.synth_noise) << "\n";
  os << "synth_classes=" << run.synth_classes << "\n";
  os << "population=" << run.evolution.population_size << "\n";
  os << "generations=" << run.evolution.generations << "\n";
  os << "speciation_threshold=" << io::format_real(run.evolution.speciation_threshold) << "\n";
  os << "tournament_size=" << run.evolution.tournament_size << "\n";
  os << "elite_count=" << run.evolution.elite_count << "\n";
  os << "p_crossover=" << io::format_real(run.evolution.p_crossover) << "\n";
  os << "p_add_protein=" << io::format_real(run.evolution.p_add_protein) << "\n";
  os << "p_remove_protein=" << io::format_real(run.evolution.p_remove_protein) << "\n";
  os << "p_mutate_tag=" << io::format_real(run.evolution.p_mutate_tag) << "\n";
  os << "p_mutate_dynamics=" << io::format_real(run.evolution.p_mutate_dynamics) << "\n";
  os << "initial_regulators=" << run.evolution.initial_regulators << "\n";
  os << "tag_mutation_sigma=" << io::format_real(run.evolution.tag_mutation_sigma) << "\n";
  os << "steps_per_query=" << run.evolution.grn.steps_per_query << "\n";
  os << "affinity_mode="
     << (run.evolution.grn.affinity_mode == grn::AffinityMode::RelativeMax ? "relative"
                                                                           : "literal")
     << "\n";
  os << "u_size=" << io::format_real(run.evolution.grn.u_size) << "\n";
  return os.str();
}

void validate_run(const RunConfig& run) {
  if (run.epochs < 1) throw UsageError("epochs must be >= 1");
  if (run.batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (run.subset < 0) throw UsageError("subset must be >= 0");
  if (run.workers < 1) throw UsageError("workers must be >= 1");
  if (run.synth_classes < 2) throw UsageError("synth_classes must be >= 2");
  if (run.synth_n < run.synth_classes) throw UsageError("synth_n must be >= synth_classes");
  if (run.synth_noise < 0.0) throw UsageError("synth_noise must be >= 0");
}

std::vector<CatalogEntry> active_catalog(const RunConfig& run) {
  switch (run.dataset) {
    case DatasetKind::Cifar10:
      return model_catalog(run.scale, 10);
    case DatasetKind::Cifar100:
      return model_catalog(run.scale, 100);
    default:
      return synth_model_catalog(run.synth_classes, 2);
  }
}

CatalogEntry resolve_model(const RunConfig& run) {
  const auto catalog = active_catalog(run);
  if (run.model.empty()) return catalog[0];
  for (const CatalogEntry& e : catalog)
    if (e.spec.name == run.model) return e;
  std::string names;
  for (const CatalogEntry& e : catalog) {
    if (!names.empty()) names += "|";
    names += e.spec.name;
  }
  throw UsageError("unknown model '" + run.model + "' (expected " + names + ")");
}

io::Dataset load_train_split(const RunConfig& run) {
  if (run.dataset == DatasetKind::Cifar10 || run.dataset == DatasetKind::Cifar100)
    return cifar_split(run, false);
  return synth_split(run, false);
}

io::Dataset load_test_split(const RunConfig& run) {
  if (run.dataset == DatasetKind::Cifar10 || run.dataset == DatasetKind::Cifar100)
    return cifar_split(run, true);
  return synth_split(run, true);
}

int batches_per_epoch(int n_samples, int batch_size) {
  return (n_samples + batch_size - 1) / batch_size;
}

std::vector<int> shuffled_indices(int n, std::uint64_t seed) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(i + 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

int sample_model_id(std::uint64_t master_seed, int generation, int n_models) {
  const std::uint64_t s = derive_seed(master_seed, 2, static_cast<std::uint64_t>(generation));
  const double u = static_cast<double>(s >> 11) * 0x1.0p-53;
  const int id = static_cast<int>(u * n_models);
  return id >= n_models ? n_models - 1 : id;
}

nn::Tensor dataset_tensor(const io::Dataset& ds) {
  nn::Tensor t = ds.inputs;
  if (t.rank() == 2) t.shape = {t.dim(0), 1, 1, t.dim(1)};
  return t;
}

TrainOutcome train_once(const TrainRun& run, const io::Dataset& train, const io::Dataset* test,
                        const TrainMethod& method, std::vector<mod::TelemetryRow>* telemetry) {
  if (run.epochs < 1) throw std::invalid_argument("train_once: epochs must be >= 1");
  if (run.batch_size < 1) throw std::invalid_argument("train_once: batch_size must be >= 1");

  nn::Network net = nn::build_network(run.model, run.init_seed);

  std::optional<mod::ControllerBank> bank;
  const opt::Preset* preset = nullptr;
  if (const auto* nm = std::get_if<MethodNm>(&method)) {
    bank = mod::make_bank(nm->genome, run.grn_config, run.base, net);
  } else if (const auto* stub = std::get_if<MethodStub>(&method)) {
    bank = mod::make_stub_bank(run.base, stub->decoded, net);
  } else {
    preset = &std::get<MethodPreset>(method).preset;
  }
  mod::OptStates states = mod::make_opt_states(net, run.base);

  const int n = train.n();
  const nn::Tensor train_full = dataset_tensor(train);
  nn::Tensor test_full;
  if (test) test_full = dataset_tensor(*test);

  nn::Tensor batch = train_full;  // carries (c, h, w); dim 0 rewritten per batch
  std::vector<int> labels;

  TrainOutcome outcome;
  long long iteration = 0;
  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    const auto order =
        shuffled_indices(n, derive_seed(run.shuffle_seed, 4, static_cast<std::uint64_t>(epoch)));
    for (int lo = 0; lo < n; lo += run.batch_size) {
      const int hi = std::min(n, lo + run.batch_size);
      gather_batch(train, order, lo, hi, batch, labels);
      if (preset) {
        mod::baseline_train_step(net, batch, labels, run.loss, *preset, states);
      } else {
        mod::neuromod_train_step(net, batch, labels, run.loss, *bank, states, iteration,
                                 telemetry);
      }
      ++iteration;
    }
    if (run.per_epoch_eval) {
      EpochStats es;
      es.epoch = epoch;
      es.train_accuracy = nn::accuracy(net, train_full, train.labels);
      es.test_accuracy = test ? nn::accuracy(net, test_full, test->labels) : 0.0;
      outcome.per_epoch.push_back(es);
    }
  }
  outcome.final_train_accuracy = run.per_epoch_eval
                                     ? outcome.per_epoch.back().train_accuracy
                                     : nn::accuracy(net, train_full, train.labels);
  return outcome;
}

double fitness_eval(const grn::Genome& genome, const evo::GenerationContext& ctx,
                    const RunConfig& run, const io::Dataset& train,
                    const std::vector<CatalogEntry>& catalog) {
  if (ctx.model_id < 0 || ctx.model_id >= static_cast<int>(catalog.size()))
    throw std::invalid_argument("fitness_eval: model id out of range");
  TrainRun tr;
  tr.model = catalog[static_cast<size_t>(ctx.model_id)].spec;
  tr.base = run.base;
  tr.loss = run.loss;
  tr.epochs = run.epochs;
  tr.batch_size = run.batch_size;
  tr.init_seed = ctx.init_seed;
  tr.shuffle_seed = derive_seed(ctx.init_seed, 4, 0);
  tr.grn_config = run.evolution.grn;
  return train_once(tr, train, nullptr, MethodNm{genome}).final_train_accuracy;
}

EvolveOutput cmd_evolve(const RunConfig& run) {
  validate_run(run);
  const auto catalog = active_catalog(run);
  const io::Dataset train = load_train_split(run);

  evo::EvolutionConfig cfg = run.evolution;
  cfg.rng_seed = run.seed;
  cfg.n_inputs = 13;
  cfg.n_outputs = run.base == opt::BaseKind::Sgd ? 4 : 8;

  const auto context = [&](int generation) {
    evo::GenerationContext ctx;
    ctx.generation = generation;
    ctx.model_id = sample_model_id(run.seed, generation, static_cast<int>(catalog.size()));
    ctx.init_seed = derive_seed(run.seed, 3, static_cast<std::uint64_t>(generation));
    return ctx;
  };
  const auto fitness = [&](const grn::Genome& g, const evo::GenerationContext& ctx) {
    return fitness_eval(g, ctx, run, train, catalog);
  };

  EvolveOutput out;
  out.result = evo::evolve(fitness, cfg, context, run.workers);

  fs::create_directories(run.out_dir);
  out.genome_path = (fs::path(run.out_dir) / "best_genome.txt").string();
  out.history_path = (fs::path(run.out_dir) / "history.csv").string();
  io::save_genome(out.genome_path, out.result.best.genome, run.base);
  io::write_history_csv(out.history_path, out.result.history);
  return out;
}

std::string cmd_compare(const RunConfig& run, const std::string& genome_path) {
  validate_run(run);
  const io::GenomeFile gf = io::load_genome(genome_path);
  const CatalogEntry entry = resolve_model(run);
  const io::Dataset train = load_train_split(run);
  const io::Dataset test = load_test_split(run);

  const opt::BaseKind base = gf.base;  // the genome was evolved against this rule
  const bool sgd = base == opt::BaseKind::Sgd;
  const opt::Preset plain =
      opt::baseline_preset(sgd ? opt::PresetMethod::Sgd : opt::PresetMethod::Adam, 0);
  if (entry.preset_id < 0)
    throw UsageError("no tuned preset exists for model '" + entry.spec.name + "'");
  const opt::Preset tuned = opt::baseline_preset(
      sgd ? opt::PresetMethod::SgdTuned : opt::PresetMethod::AdamTuned, entry.preset_id);

  TrainRun tr;
  tr.model = entry.spec;
  tr.base = base;
  tr.loss = run.loss;
  tr.epochs = run.epochs;
  tr.batch_size = run.batch_size;
  tr.init_seed = derive_seed(run.seed, 5, 0);
  tr.shuffle_seed = derive_seed(run.seed, 6, 0);
  tr.per_epoch_eval = true;
  tr.grn_config = run.evolution.grn;

  const std::string label = method_label(base);
  const std::vector<std::string> names = {label, label + "_star", "nm_" + label};
  std::vector<TrainOutcome> outcomes;
  outcomes.push_back(train_once(tr, train, &test, MethodPreset{plain}));
  outcomes.push_back(train_once(tr, train, &test, MethodPreset{tuned}));
  outcomes.push_back(train_once(tr, train, &test, MethodNm{gf.genome}));

  fs::create_directories(run.out_dir);
  const std::string path = (fs::path(run.out_dir) / "compare.csv").string();
  write_compare_csv(path, names, outcomes);
  return path;
}

std::string cmd_trace(const RunConfig& run, const std::string& genome_path) {
  validate_run(run);
  const io::GenomeFile gf = io::load_genome(genome_path);
  const CatalogEntry entry = resolve_model(run);
  const io::Dataset train = load_train_split(run);

  TrainRun tr;
  tr.model = entry.spec;
  tr.base = gf.base;
  tr.loss = run.loss;
  tr.epochs = run.epochs;
  tr.batch_size = run.batch_size;
  tr.init_seed = derive_seed(run.seed, 5, 0);
  tr.shuffle_seed = derive_seed(run.seed, 6, 0);
  tr.grn_config = run.evolution.grn;

  std::vector<mod::TelemetryRow> rows;
  train_once(tr, train, nullptr, MethodNm{gf.genome}, &rows);

  fs::create_directories(run.out_dir);
  const std::string path = (fs::path(run.out_dir) / "telemetry.csv").string();
  io::write_telemetry_csv(path, rows, gf.base == opt::BaseKind::Sgd ? 2 : 4);
  return path;
}

}  // namespace nmod::harness
