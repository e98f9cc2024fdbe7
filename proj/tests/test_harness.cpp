#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "nmod/harness.hpp"
#include "nmod/rng.hpp"

using namespace nmod;
using namespace nmod::harness;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

grn::Genome controller_genome(int n_outputs, std::uint64_t seed) {
  evo::EvolutionConfig cfg;
  cfg.initial_regulators = 2;
  Rng rng(seed);
  return evo::random_genome(13, n_outputs, cfg, rng);
}

grn::Genome zero_eta_genome(std::uint64_t seed) {
  evo::EvolutionConfig cfg;
  Rng rng(seed);
  grn::Genome g = evo::random_genome(13, 4, cfg, rng);
  for (int p = 0; p < 2; ++p) {
    grn::Protein& first = g.proteins[static_cast<size_t>(13 + 2 * p)];
    g.proteins[static_cast<size_t>(13 + 2 * p + 1)].id = first.id;
    g.proteins[static_cast<size_t>(13 + 2 * p + 1)].enh = first.enh;
    g.proteins[static_cast<size_t>(13 + 2 * p + 1)].inh = first.inh;
  }
  return g;
}

void check_layers(const nn::ModelSpec& spec, const std::vector<nn::LayerKind>& kinds,
                  const std::vector<int>& sizes) {
  REQUIRE(spec.layers.size() == kinds.size());
  for (size_t i = 0; i < kinds.size(); ++i) {
    CHECK(spec.layers[i].kind == kinds[i]);
    if (kinds[i] == nn::LayerKind::Conv) CHECK(spec.layers[i].out_channels == sizes[i]);
    if (kinds[i] == nn::LayerKind::Dense) CHECK(spec.layers[i].out_units == sizes[i]);
  }
}

void write_cifar10_fixture(const fs::path& dir, int per_batch, std::uint64_t seed) {
  Rng rng(seed);
  const auto write_batch = [&](const std::string& name, int count) {
    std::vector<std::uint8_t> bytes(static_cast<size_t>(count) * 3073);
    for (size_t i = 0; i < bytes.size(); ++i) {
      const bool label_byte = i % 3073 == 0;
      bytes[i] =
          static_cast<std::uint8_t>(label_byte ? rng.uniform_int(10) : rng.uniform_int(256));
    }
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  };
  for (int b = 1; b <= 5; ++b) write_batch("data_batch_" + std::to_string(b) + ".bin", per_batch);
  write_batch("test_batch.bin", per_batch / 2);
}

RunConfig blobs_run(const std::string& out_dir) {
  RunConfig run;
  run.dataset = DatasetKind::Blobs;
  run.synth_n = 60;
  run.synth_classes = 2;
  run.epochs = 1;
  run.batch_size = 32;
  run.out_dir = out_dir;
  run.seed = 123;
  run.workers = 2;
  run.evolution.population_size = 4;
  run.evolution.generations = 2;
  return run;
}

}  // namespace

TEST_CASE("image model catalog matches the published layer table") {
  using K = nn::LayerKind;
  const auto paper = model_catalog(Scale::Paper, 10);
  REQUIRE(paper.size() == 3);
  CHECK(paper[0].spec.name == "m0");
  CHECK(paper[0].preset_id == 0);
  check_layers(paper[0].spec,
               {K::Conv, K::Conv, K::MaxPool, K::Conv, K::Conv, K::MaxPool, K::Dense, K::Dense},
               {32, 32, 0, 64, 64, 0, 512, 10});
  check_layers(paper[1].spec,
               {K::Conv, K::MaxPool, K::Conv, K::MaxPool, K::Conv, K::MaxPool, K::Conv, K::MaxPool,
                K::Dense, K::Dense, K::Dense},
               {64, 0, 128, 0, 256, 0, 512, 0, 4096, 4096, 10});
  check_layers(paper[2].spec,
               {K::Conv, K::MaxPool, K::Conv, K::MaxPool, K::Conv, K::MaxPool, K::Conv, K::MaxPool,
                K::Conv, K::MaxPool, K::Dense, K::Dense, K::Dense},
               {64, 0, 128, 0, 256, 0, 512, 0, 512, 0, 4096, 4096, 10});

  const auto desk = model_catalog(Scale::Desk, 10);
  CHECK(desk[0].spec.layers[0].out_channels == 8);  // 32 / 4
  CHECK(desk[0].spec.layers[6].out_units == 128);
  CHECK(desk[0].spec.layers[7].out_units == 10);  // output width never scales
  CHECK(desk[2].spec.layers[0].out_channels == 16);
  CHECK(desk[2].spec.layers[10].out_units == 1024);

  // desk builds: weighted layer counts for the three architectures
  const std::array<int, 3> weighted = {6, 7, 8};
  for (int m = 0; m < 3; ++m) {
    const nn::Network net = nn::build_network(desk[static_cast<size_t>(m)].spec, 1);
    CHECK(net.weighted_layer_count == weighted[static_cast<size_t>(m)]);
  }
}

TEST_CASE("minimum width of 8 survives desk scaling") {
  nn::ModelSpec m0 = model_catalog(Scale::Desk, 10)[0].spec;
  for (const auto& l : m0.layers)
    if (l.kind == nn::LayerKind::Conv) CHECK(l.out_channels >= 8);
}

TEST_CASE("synthetic catalog provides two small dense models") {
  const auto cat = synth_model_catalog(2, 2);
  REQUIRE(cat.size() == 2);
  CHECK(cat[0].spec.name == "mlp0");
  CHECK(cat[0].preset_id == -1);
  check_layers(cat[0].spec, {nn::LayerKind::Dense, nn::LayerKind::Dense}, {16, 2});
  check_layers(cat[1].spec, {nn::LayerKind::Dense, nn::LayerKind::Dense, nn::LayerKind::Dense},
               {32, 16, 2});
  CHECK(cat[0].spec.in_width == 2);
  CHECK(cat[0].spec.in_channels == 1);
}

TEST_CASE("model resolution is catalog-aware") {
  RunConfig run;
  run.dataset = DatasetKind::Blobs;
  CHECK(resolve_model(run).spec.name == "mlp0");
  run.model = "mlp1";
  CHECK(resolve_model(run).spec.name == "mlp1");
  run.model = "m0";
  CHECK_THROWS_AS(resolve_model(run), UsageError);

  run.dataset = DatasetKind::Cifar10;
  CHECK(resolve_model(run).spec.name == "m0");
  CHECK(resolve_model(run).spec.n_out == 10);
  run.dataset = DatasetKind::Cifar100;
  CHECK(resolve_model(run).spec.n_out == 100);
}

TEST_CASE("config entries parse strictly") {
  RunConfig run;
  apply_config_entry(run, "epochs", "7");
  CHECK(run.epochs == 7);
  apply_config_entry(run, "base", "adam");
  CHECK(run.base == opt::BaseKind::Adam);
  apply_config_entry(run, "p_crossover", "0.25");
  CHECK(run.evolution.p_crossover == 0.25);
  apply_config_entry(run, "affinity_mode", "literal");
  CHECK(run.evolution.grn.affinity_mode == grn::AffinityMode::PaperLiteral);

  CHECK_THROWS_AS(apply_config_entry(run, "epoch", "7"), UsageError);
  CHECK_THROWS_AS(apply_config_entry(run, "epochs", "x7"), UsageError);
  CHECK_THROWS_AS(apply_config_entry(run, "base", "rmsprop"), UsageError);
  CHECK_THROWS_AS(apply_config_entry(run, "synth_noise", "0.4abc"), UsageError);
}

TEST_CASE("config files load with comments and override defaults") {
  TempDir dir("nmod_cfg_test");
  const std::string path = (dir.path / "run.cfg").string();
  {
    std::ofstream out(path);
    out << "# comment line\n\nseed=42\nepochs = 9\n  batch_size=13\ndataset=spirals\n";
  }
  const RunConfig run = load_config_file(path, default_config());
  CHECK(run.seed == 42);
  CHECK(run.epochs == 9);
  CHECK(run.batch_size == 13);
  CHECK(run.dataset == DatasetKind::Spirals);

  {
    std::ofstream out(path);
    out << "epochs\n";
  }
  CHECK_THROWS_AS(load_config_file(path, default_config()), UsageError);
  CHECK_THROWS_AS(load_config_file((dir.path / "missing.cfg").string(), default_config()),
                  io::DataError);
}

TEST_CASE("rendered config reparses to the same rendering") {
  RunConfig run = default_config();
  run.seed = 77;
  run.base = opt::BaseKind::Adam;
  run.epochs = 11;
  run.synth_noise = 0.125;
  run.evolution.speciation_threshold = 0.3;
  const std::string text = render_config(run);

  RunConfig reparsed = default_config();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    apply_config_entry(reparsed, line.substr(0, eq), line.substr(eq + 1));
  }
  CHECK(render_config(reparsed) == text);
}

TEST_CASE("run validation rejects degenerate parameters") {
  RunConfig run;
  run.epochs = 0;
  CHECK_THROWS_AS(validate_run(run), UsageError);
  run = RunConfig{};
  run.batch_size = 0;
  CHECK_THROWS_AS(validate_run(run), UsageError);
  run = RunConfig{};
  run.synth_classes = 1;
  CHECK_THROWS_AS(validate_run(run), UsageError);
  run = RunConfig{};
  CHECK_NOTHROW(validate_run(run));
}

TEST_CASE("epoch batching rounds up") {
  CHECK(batches_per_epoch(50000, 128) == 391);
  CHECK(batches_per_epoch(200, 32) == 7);
  CHECK(batches_per_epoch(5, 5) == 1);
  CHECK(batches_per_epoch(6, 5) == 2);
  CHECK(batches_per_epoch(1, 128) == 1);
}

TEST_CASE("shuffles are seeded permutations") {
  const auto a = shuffled_indices(100, 5);
  const auto b = shuffled_indices(100, 5);
  const auto c = shuffled_indices(100, 6);
  CHECK(a == b);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
  CHECK(a != iota);  // 100 elements: identity permutation would be astonishing
}

TEST_CASE("per-generation model sampling is deterministic and near uniform") {
  std::array<int, 3> counts{};
  for (int gen = 0; gen < 3000; ++gen) {
    const int id = sample_model_id(42, gen, 3);
    REQUIRE(id >= 0);
    REQUIRE(id < 3);
    counts[static_cast<size_t>(id)]++;
    CHECK(sample_model_id(42, gen, 3) == id);
  }
  double chi2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double diff = counts[static_cast<size_t>(k)] - 1000.0;
    chi2 += diff * diff / 1000.0;
  }
  CHECK(chi2 < 20.0);
  CHECK(sample_model_id(42, 0, 1) == 0);
}

TEST_CASE("dataset splits are loadable and shaped") {
  RunConfig run = blobs_run("unused");
  const io::Dataset train = load_train_split(run);
  const io::Dataset test = load_test_split(run);
  CHECK(train.n() == 60);
  CHECK(test.n() == 15);
  CHECK(train.n_classes == 2);
  CHECK(dataset_tensor(train).shape == std::vector<int>{60, 1, 1, 2});

  // a different master seed re-rolls the surrogate data
  RunConfig other = run;
  other.seed = 999;
  CHECK(load_train_split(other).inputs.data != train.inputs.data);
}

TEST_CASE("fitness is deterministic and a frozen controller scores the untrained network") {
  RunConfig run = blobs_run("unused");
  run.epochs = 2;
  run.batch_size = 16;
  const auto catalog = active_catalog(run);
  const io::Dataset train = load_train_split(run);

  evo::GenerationContext ctx;
  ctx.generation = 0;
  ctx.model_id = 0;
  ctx.init_seed = 5;

  const grn::Genome g = controller_genome(4, 31);
  const double f1 = fitness_eval(g, ctx, run, train, catalog);
  const double f2 = fitness_eval(g, ctx, run, train, catalog);
  CHECK(f1 == f2);
  CHECK(f1 >= 0.0);
  CHECK(f1 <= 1.0);

  const double frozen = fitness_eval(zero_eta_genome(33), ctx, run, train, catalog);
  const nn::Network untouched = nn::build_network(catalog[0].spec, ctx.init_seed);
  CHECK(frozen == nn::accuracy(untouched, dataset_tensor(train), train.labels));

  evo::GenerationContext bad = ctx;
  bad.model_id = 7;
  CHECK_THROWS_AS(fitness_eval(g, bad, run, train, catalog), std::invalid_argument);
}

TEST_CASE("a plain stub controller masters the blob surrogate") {
  const io::Dataset train = io::synth_dataset(io::SynthKind::Blobs, 200, 2, 7);
  TrainRun tr;
  tr.model = synth_model_catalog(2, 2)[0].spec;
  tr.base = opt::BaseKind::Sgd;
  tr.loss = nn::LossKind::MSE;
  tr.epochs = 5;
  tr.batch_size = 16;
  tr.init_seed = 11;
  tr.shuffle_seed = 13;
  const TrainOutcome out = train_once(tr, train, nullptr, MethodStub{{0.01, 0.0}});
  CHECK(out.final_train_accuracy >= 0.95);
}

TEST_CASE("evolve writes reproducible artifacts") {
  TempDir d1("nmod_evolve_a");
  TempDir d2("nmod_evolve_b");
  TempDir d3("nmod_evolve_c");

  RunConfig run = blobs_run(d1.str());
  const EvolveOutput out1 = cmd_evolve(run);
  CHECK(fs::exists(out1.genome_path));
  CHECK(fs::exists(out1.history_path));
  CHECK(out1.result.history.size() == 2);

  const io::GenomeFile best = io::load_genome(out1.genome_path);
  CHECK(best.base == opt::BaseKind::Sgd);
  CHECK(best.genome.n_inputs() == 13);
  CHECK(best.genome.n_outputs() == 4);

  run.out_dir = d2.str();
  const EvolveOutput out2 = cmd_evolve(run);
  CHECK(slurp(out2.history_path) == slurp(out1.history_path));
  CHECK(slurp(out2.genome_path) == slurp(out1.genome_path));

  // worker count must not alter results, only wall time
  run.out_dir = d3.str();
  run.workers = 1;
  const EvolveOutput out3 = cmd_evolve(run);
  CHECK(slurp(out3.history_path) == slurp(out1.history_path));
  CHECK(slurp(out3.genome_path) == slurp(out1.genome_path));

  const std::string hist = slurp(out1.history_path);
  CHECK(hist.rfind("generation,", 0) == 0);
  CHECK(count_lines(hist) == 3);
}

TEST_CASE("compare requires a tuned preset for the chosen model") {
  TempDir dir("nmod_cmp_usage");
  const std::string gpath = (dir.path / "g.txt").string();
  io::save_genome(gpath, controller_genome(4, 51), opt::BaseKind::Sgd);

  RunConfig run = blobs_run(dir.str());
  CHECK_THROWS_AS(cmd_compare(run, gpath), UsageError);
}

TEST_CASE("compare trains three methods with the base recorded in the genome file") {
  TempDir data("nmod_cmp_data");
  TempDir out("nmod_cmp_out");
  write_cifar10_fixture(data.path, 24, 7);

  const std::string gpath = (out.path / "g.txt").string();
  io::save_genome(gpath, controller_genome(8, 53), opt::BaseKind::Adam);

  RunConfig run;
  run.dataset = DatasetKind::Cifar10;
  run.data_dir = data.str();
  run.scale = Scale::Desk;
  run.model = "m0";
  run.base = opt::BaseKind::Sgd;  // overridden by the genome file's own base
  run.epochs = 2;
  run.batch_size = 40;
  run.subset = 80;
  run.out_dir = out.str();
  run.seed = 55;

  const std::string csv = cmd_compare(run, gpath);
  const std::string text = slurp(csv);
  CHECK(count_lines(text) == 1 + 2 * 3);
  CHECK(text.rfind("method,epoch,train_accuracy,test_accuracy\n", 0) == 0);
  CHECK(text.find("\nadam,0,") != std::string::npos);
  CHECK(text.find("\nadam_star,") != std::string::npos);
  CHECK(text.find("\nnm_adam,1,") != std::string::npos);
  CHECK(text.find("sgd") == std::string::npos);

  const std::string rerun = cmd_compare(run, gpath);
  CHECK(slurp(rerun) == text);
}

TEST_CASE("trace emits per-iteration controller telemetry") {
  TempDir dir("nmod_trace_out");
  const std::string gpath = (dir.path / "g.txt").string();
  io::save_genome(gpath, controller_genome(4, 57), opt::BaseKind::Sgd);

  RunConfig run = blobs_run(dir.str());
  run.synth_n = 40;
  run.batch_size = 8;
  run.epochs = 1;
  run.model = "mlp0";

  const std::string csv = cmd_trace(run, gpath);
  const std::string text = slurp(csv);
  // 5 iterations x (2 weighted layers x 2 groups) rows + header
  CHECK(count_lines(text) == 1 + 5 * 4);
  CHECK(text.find(",out_0,out_1\n") != std::string::npos);
  CHECK(slurp(cmd_trace(run, gpath)) == text);
}
