// Copyright 2026 The EPAN Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "epan/errors.hpp"
#include "epan/eval.hpp"
#include "epan/gradient_suite.hpp"
#include "epan/image_io.hpp"
#include "epan/market.hpp"
#include "epan/model.hpp"
#include "epan/parallel.hpp"
#include "epan/run_config.hpp"
#include "epan/synthetic.hpp"
#include "epan/trainer.hpp"

namespace epan::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEmbedBatch = 32;

struct Split3 {
  std::vector<Tensord> images;
  std::vector<int> pids;
  std::vector<int> camids;
};

struct Data {
  Split3 train, query, gallery;
};

void prepare_output(const fs::path& dir, bool force) {
  if (dir.empty()) throw ConfigError("config key 'output.dir': no output directory given");
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ConfigError("output path " + dir.string() + " exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError("output directory " + dir.string() +
                      " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

Tensord fit(const Tensord& image, const ModelConfig& m) {
  if (image.dim(1) == m.height && image.dim(2) == m.width) return image;
  return resize(image, m.height, m.width);
}

Data load_data(const RunConfig& c, std::ostream& out) {
  Data d;
  if (c.synthetic_source) {
    const SynthDataset synth = generate_synthetic(c.synth);
    for (const auto& s : synth.samples) {
      Split3& dst = s.split == Split::train ? d.train : s.split == Split::query ? d.query : d.gallery;
      dst.images.push_back(fit(s.image, c.model));
      dst.pids.push_back(s.pid);
      dst.camids.push_back(s.camid);
    }
    out << "synthetic data: " << d.train.images.size() << " train, " << d.query.images.size()
        << " query, " << d.gallery.images.size() << " gallery\n";
    return d;
  }
  if (c.dataset_root.empty()) throw ConfigError("config key 'dataset.root': not set");
  const MarketDataset ds = load_dataset(c.dataset_root);
  out << ds.summary() << '\n';
  if (!c.expected_counts.empty()) {
    const ExpectedCounts e = parse_expected_counts(c.expected_counts);
    if (!ds.matches(e)) {
      const ExpectedCounts got = ds.counts();
      throw FormatError("dataset counts " + std::to_string(got.train) + "," +
                        std::to_string(got.query) + "," + std::to_string(got.gallery) +
                        " differ from the expected " + c.expected_counts);
    }
  }
  auto fill = [&](const std::vector<SampleRecord>& records, Split3& dst) {
    dst.images.resize(records.size());
    parallel_for(records.size(), c.workers, [&](std::size_t i) {
      dst.images[i] = fit(load_image(records[i].image_path), c.model);
    });
    for (const auto& r : records) {
      dst.pids.push_back(r.pid);
      dst.camids.push_back(r.camid);
    }
  };
  fill(ds.train, d.train);
  fill(ds.query, d.query);
  fill(ds.gallery, d.gallery);
  return d;
}

std::vector<int> relabel(const std::vector<int>& pids, std::size_t* classes) {
  std::map<int, int> index;
  for (int p : pids) index.emplace(p, 0);
  int next = 0;
  for (auto& [pid, label] : index) label = next++;
  std::vector<int> labels;
  for (int p : pids) labels.push_back(index.at(p));
  *classes = index.size();
  return labels;
}

template <Real T>
void run_training(const RunConfig& c, const Data& data, std::ostream& out) {
  std::size_t classes = 0;
  TrainingSet<T> set;
  set.labels = relabel(data.train.pids, &classes);
  for (const auto& img : data.train.images) set.images.push_back(img.template cast<T>());
  ModelConfig m = c.model;
  m.num_classes = classes;
  EpanModel<T> model(m, c.seed);
  AugmentConfig aug = c.aug;
  aug.erase_fill = channel_mean<double>(data.train.images);

  TrainHooks<T> hooks;
  hooks.workers = resolve_workers(c.workers);
  hooks.on_epoch_end = [&](std::size_t epoch, const EpanModel<T>& mdl, const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu  loss %.6f  lr %.3g  %.1fs\n", epoch, r.mean_loss,
                  r.lr, r.wall_seconds);
    out << line << std::flush;
    if (c.checkpoint_every > 0 && (epoch + 1) % c.checkpoint_every == 0) {
      save_checkpoint(mdl, c.output_dir / ("checkpoint_epoch" + std::to_string(epoch + 1)));
    }
  };
  const TrainLog log = train(model, set, c.loss, c.optim, aug, hooks);
  save_checkpoint(model, c.output_dir / "final");
  write_log_csv(c.output_dir / "train_log.csv", log);
  out << "wrote " << (c.output_dir / "final").string() << ".{index,eptn} and train_log.csv\n";
}

int cmd_train(const fs::path& config_path, bool force, std::ostream& out) {
  const RunConfig c = load_run_config(config_path);
  prepare_output(c.output_dir, force);
  write_text(c.output_dir / "config.resolved", resolved_config_text(c));
  const Data data = load_data(c, out);
  if (c.double_precision) {
    run_training<double>(c, data, out);
  } else {
    run_training<float>(c, data, out);
  }
  return 0;
}

// Builds a double-precision model matching `stem`, with the class count read
// from the checkpoint index.
EpanModel<double> model_from_checkpoint(const ModelConfig& base, const fs::path& stem,
                                        std::uint64_t seed) {
  ModelConfig m = base;
  for (const auto& [name, shape] : checkpoint_shapes(stem)) {
    if (name == "base.head.classifier.weight" && !shape.empty()) m.num_classes = shape[0];
  }
  EpanModel<double> model(m, seed);
  load_checkpoint(model, stem);
  return model;
}

Tensord embed_all(EpanModel<double>* model, const std::vector<Tensord>& images) {
  if (images.empty()) throw ConfigError("no images to embed");
  const std::size_t plane = images[0].size();
  if (model == nullptr) {
    Tensord raw({images.size(), plane});
    auto dst = raw.mutable_data();
    for (std::size_t i = 0; i < images.size(); ++i) {
      std::copy(images[i].data().begin(), images[i].data().end(), dst.begin() + static_cast<long>(i * plane));
    }
    return raw;
  }
  std::vector<double> rows;
  std::size_t dim = 0;
  for (std::size_t start = 0; start < images.size(); start += kEmbedBatch) {
    const std::size_t n = std::min(kEmbedBatch, images.size() - start);
    Tensord batch({n, images[0].dim(0), images[0].dim(1), images[0].dim(2)});
    auto dst = batch.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(images[start + i].data().begin(), images[start + i].data().end(),
                dst.begin() + static_cast<long>(i * plane));
    }
    const Tensord e = model->infer_embedding(batch);
    dim = e.dim(1);
    rows.insert(rows.end(), e.data().begin(), e.data().end());
  }
  return Tensord({images.size(), dim}, std::move(rows));
}

fs::path default_config_for(const fs::path& checkpoint) {
  return checkpoint_stem(checkpoint).parent_path() / "config.resolved";
}

int cmd_eval(const fs::path& config_path, const std::optional<fs::path>& checkpoint,
             const std::optional<fs::path>& output, bool force, std::ostream& out) {
  const RunConfig c = load_run_config(config_path);
  std::optional<EpanModel<double>> model;
  if (!c.raw_pixel_embedding) {
    if (!checkpoint) throw ConfigError("eval with eval.embedding=model needs --checkpoint");
    model.emplace(model_from_checkpoint(c.model, *checkpoint, c.seed));
  }
  const fs::path dir = output ? *output : c.output_dir / "eval";
  prepare_output(dir, force);
  const Data data = load_data(c, out);
  EpanModel<double>* m = model ? &*model : nullptr;
  const Tensord q = embed_all(m, data.query.images);
  const Tensord g = embed_all(m, data.gallery.images);
  // Raw pixels are compared by direction so camera brightness does not
  // dominate the distance.
  const Metric metric = c.raw_pixel_embedding ? Metric::cosine : c.metric;
  std::size_t zero_rows = 0;
  const Tensord dist = distance_matrix(q, g, metric, &zero_rows);
  const EvalReport report = evaluate(dist, data.query.pids, data.query.camids,
                                     data.gallery.pids, data.gallery.camids,
                                     std::min(c.max_rank, data.gallery.images.size()), metric);
  write_text(dir / "eval_report.csv", report_csv(report));
  char line[160];
  std::snprintf(line, sizeof line, "Rank-1 %.4f  Rank-5 %.4f  Rank-10 %.4f  mAP %.4f\n",
                report.rank(1), report.cmc[std::min<std::size_t>(5, report.cmc.size()) - 1],
                report.cmc[std::min<std::size_t>(10, report.cmc.size()) - 1], report.map);
  out << line << "valid queries " << report.num_valid_queries << ", excluded "
      << report.num_invalid_queries;
  if (zero_rows) out << ", zero-norm rows " << zero_rows;
  out << "\nwrote " << (dir / "eval_report.csv").string() << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, bool model, std::ostream& out) {
  GradSuiteOptions opt;
  opt.first_seed = seed;
  opt.seeds = seeds;
  opt.include_model = model;
  const GradSuiteReport report = run_gradient_suite(opt);
  char line[160];
  for (const auto& c : report.cases) {
    std::snprintf(line, sizeof line, "%-34s max rel err %.3e  tol %.0e  seed %llu  %s\n",
                  c.name.c_str(), c.max_rel_error, c.tolerance,
                  static_cast<unsigned long long>(c.worst_seed), c.passed() ? "ok" : "FAIL");
    out << line;
  }
  std::snprintf(line, sizeof line, "%zu seeds from %llu in %.1fs: %s\n", seeds,
                static_cast<unsigned long long>(seed), report.seconds,
                report.passed() ? "all passed" : "violations found");
  out << line;
  return report.passed() ? 0 : 3;
}

int cmd_synth(const fs::path& spec_path, const std::optional<fs::path>& output, bool force,
              std::ostream& out) {
  const RunConfig c = load_run_config(spec_path);
  const fs::path dir = output ? *output : c.output_dir;
  prepare_output(dir, force);
  const SynthDataset data = generate_synthetic(c.synth);
  write_synthetic(data, dir);
  out << "wrote " << data.samples.size() << " images (" << data.split(Split::train).size()
      << " train, " << data.split(Split::query).size() << " query, "
      << data.split(Split::gallery).size() << " gallery) to " << dir.string() << '\n';
  return 0;
}

int cmd_distmat(const fs::path& img_a, const fs::path& img_b, const fs::path& checkpoint,
                const std::optional<fs::path>& config_path, const fs::path& output, bool force,
                std::ostream& out) {
  const fs::path cfg_path = config_path ? *config_path : default_config_for(checkpoint);
  const RunConfig c = load_run_config(cfg_path);
  EpanModel<double> model = model_from_checkpoint(c.model, checkpoint, c.seed);
  prepare_output(output, force);
  auto features = [&](const fs::path& p) {
    const Tensord img = fit(load_image(p), c.model);
    const auto fwd = model.forward(img, Mode::eval);
    const Tensord f = fwd.align.stage2;
    return f.reshaped({f.dim(1), f.dim(2), f.dim(3)});
  };
  const Tensord m = block_distance_matrix(features(img_a), features(img_b), 8);
  write_text(output / "block_distance.csv", matrix_csv(m));
  write_matrix_pgm(output / "block_distance.pgm", m);
  out << matrix_csv(m) << "wrote " << (output / "block_distance.csv").string() << " and .pgm\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"epan: aligned person re-identification toolkit"};
  app.require_subcommand(1);
  bool force = false;

  fs::path train_config;
  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", train_config, "run config file")->required();
  train->add_flag("--force", force, "allow a non-empty output directory");

  fs::path eval_config;
  std::optional<fs::path> eval_checkpoint, eval_output;
  auto* eval = app.add_subcommand("eval", "rank the query set against the gallery");
  eval->add_option("--config", eval_config, "run config file")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint stem, .index or .eptn path");
  eval->add_option("--output", eval_output, "report directory (default <output.dir>/eval)");
  eval->add_flag("--force", force, "allow a non-empty output directory");

  std::uint64_t grad_seed = 0;
  std::size_t grad_seeds = 20;
  bool grad_no_model = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  grad->add_option("--seed", grad_seed, "first seed");
  grad->add_option("--seeds", grad_seeds, "number of seeds")->check(CLI::PositiveNumber);
  grad->add_flag("--no-model", grad_no_model, "skip the full-model check");

  fs::path synth_spec;
  std::optional<fs::path> synth_output;
  auto* synth = app.add_subcommand("synth", "write the synthetic misalignment benchmark");
  synth->add_option("--spec", synth_spec, "config file with synth.* keys")->required();
  synth->add_option("--output", synth_output, "dataset directory (default output.dir)");
  synth->add_flag("--force", force, "allow a non-empty output directory");

  fs::path img_a, img_b, dm_checkpoint, dm_output;
  std::optional<fs::path> dm_config;
  auto* dm = app.add_subcommand("distmat", "8-block stripe distance matrix of two images");
  dm->add_option("--imgA", img_a, "first image (PPM/PGM)")->required();
  dm->add_option("--imgB", img_b, "second image (PPM/PGM)")->required();
  dm->add_option("--checkpoint", dm_checkpoint, "checkpoint stem")->required();
  dm->add_option("--config", dm_config, "run config (default: config.resolved beside the checkpoint)");
  dm->add_option("--output", dm_output, "output directory")->required();
  dm->add_flag("--force", force, "allow a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "epan: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) return cmd_train(train_config, force, out);
    if (*eval) return cmd_eval(eval_config, eval_checkpoint, eval_output, force, out);
    if (*grad) return cmd_gradcheck(grad_seed, grad_seeds, !grad_no_model, out);
    if (*synth) return cmd_synth(synth_spec, synth_output, force, out);
    if (*dm) return cmd_distmat(img_a, img_b, dm_checkpoint, dm_config, dm_output, force, out);
  } catch (const Error& e) {
    err << "epan: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "epan: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "epan: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace epan::cli
