// melsmooth: acoustic-feature extraction, smoothing augmentation, and MSD
// analysis for universal vocoder training data.

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <limits>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "melsmooth/augment.hpp"
#include "melsmooth/featureset.hpp"
#include "melsmooth/manifest.hpp"
#include "melsmooth/metrics.hpp"
#include "melsmooth/pipeline.hpp"
#include "melsmooth/server.hpp"
#include "melsmooth/wav.hpp"

namespace fs = std::filesystem;
using namespace melsmooth;

namespace {

// JSON config files: top-level keys are global options, one nested object per
// subcommand. Command-line flags override config values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    input >> j;
    std::vector<CLI::ConfigItem> items;
    std::function<void(const nlohmann::json&, std::vector<std::string>)> walk =
        [&](const nlohmann::json& node, std::vector<std::string> parents) {
          for (const auto& [key, value] : node.items()) {
            if (value.is_object()) {
              auto p = parents;
              p.push_back(key);
              walk(value, p);
              continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            const auto as_string = [](const nlohmann::json& v) {
              return v.is_string() ? v.get<std::string>() : v.dump();
            };
            if (value.is_array())
              for (const auto& e : value) item.inputs.push_back(as_string(e));
            else
              item.inputs.push_back(as_string(value));
            items.push_back(std::move(item));
          }
        };
    walk(j, {});
    return items;
  }
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const int count = std::min<std::size_t>(jobs, n);
  for (int j = 0; j < count; ++j)
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& w : workers) w.join();
}

// AFV1 files of a directory, sorted by utterance id (= filename stem).
std::vector<std::pair<std::string, fs::path>> list_features(const std::string& dir) {
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".afv1")
      files.emplace_back(e.path().stem().string(), e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .afv1 files in " + dir);
  return files;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  std::string token;
  std::istringstream in(spec);
  while (std::getline(in, token, ',')) {
    const auto x = token.find('x');
    if (x == std::string::npos)
      throw CLI::ValidationError("--sizes", "expected LTxLF pairs, e.g. 3x1,5x1,5x3");
    sizes.emplace_back(std::stoul(token.substr(0, x)), std::stoul(token.substr(x + 1)));
  }
  if (sizes.empty()) throw CLI::ValidationError("--sizes", "no sizes given");
  return sizes;
}

void print_histogram(std::ostream& out, const metrics::NormalizedHistogram& h,
                     const std::string& label) {
  out << "# histogram\t" << label << "\n";
  out << "# bin_lo\tbin_hi\tmass\n";
  for (std::size_t i = 0; i < h.masses.size(); ++i)
    out << fmt_double(h.bin_edges[i]) << "\t" << fmt_double(h.bin_edges[i + 1]) << "\t"
        << fmt_double(h.masses[i]) << "\n";
  out << "# out_of_range_fraction\t" << fmt_double(h.out_of_range_fraction()) << "\n";
}

struct CommonPolicyFlags {
  augment::SmoothingPolicy policy;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Base augmentation seed")
        ->envname("MELSMOOTH_SEED")
        ->capture_default_str();
    cmd->add_option("--nt", policy.n_t, "Time-size candidate count N_t")->capture_default_str();
    cmd->add_option("--nf", policy.n_f, "Frequency-size candidate count N_f")
        ->capture_default_str();
    cmd->add_option("--pg", policy.p_g, "Identity-size probability p_g")->capture_default_str();
    cmd->add_option("--start-fraction", policy.augment_start_fraction,
                    "Fraction of training before augmentation starts")
        ->capture_default_str();
    cmd->add_flag("--per-step-only", policy.per_step_only,
                  "Draw one size pair per step instead of per (step, utterance)");
    cmd->add_flag("--linear-domain", policy.linear_domain,
                  "Smooth in linear amplitude instead of dB");
  }

  augment::SmoothingPolicy resolved() const {
    augment::SmoothingPolicy p = policy;
    p.base_seed = seed;
    return p;
  }
};

int cmd_extract(const std::string& manifest_path, const std::string& out_dir, int jobs,
                const pipeline::ExtractConfig& cfg) {
  const auto entries = manifest::load(manifest_path);
  if (entries.empty()) {
    std::cerr << "extract: empty manifest " << manifest_path << "\n";
    return 2;
  }
  fs::create_directories(out_dir);

  struct Row {
    std::size_t frames = 0;
    std::string error;
  };
  std::vector<Row> rows(entries.size());
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    try {
      const Waveform w = wav::read_wav(entries[i].wav_path, 24000);
      const auto feat = pipeline::extract(w, cfg, entries[i].id);
      featureset::write_afv1(feat, (fs::path(out_dir) / (entries[i].id + ".afv1")).string());
      rows[i].frames = feat.n_frames;
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });

  std::cout << "# id\tframes\tstatus\n";
  int failures = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (rows[i].error.empty()) {
      std::cout << entries[i].id << "\t" << rows[i].frames << "\tok\n";
    } else {
      std::cout << entries[i].id << "\t0\terror: " << rows[i].error << "\n";
      ++failures;
    }
  }
  if (failures) std::cerr << "extract: " << failures << " utterance(s) failed\n";
  return failures ? 1 : 0;
}

int cmd_stats(const std::string& feature_dir, const std::string& out_path, int jobs) {
  const auto files = list_features(feature_dir);
  std::vector<featureset::NormStats> partial(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    partial[i].accumulate(featureset::read_afv1(files[i].second.string(), files[i].first));
  });
  // Sequential merge in sorted-id order keeps the result independent of jobs.
  featureset::NormStats stats;
  for (const auto& p : partial) stats.merge(p);
  featureset::save_stats(stats, out_path);
  std::cout << "# frames\tutterances\n" << stats.count << "\t" << files.size() << "\n";
  return 0;
}

int cmd_normalize(const std::string& feature_dir, const std::string& stats_path,
                  const std::string& out_dir, bool raw_voicing, int jobs) {
  const auto files = list_features(feature_dir);
  const featureset::NormStats stats = featureset::load_stats(stats_path);
  fs::create_directories(out_dir);
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const auto feat = featureset::read_afv1(files[i].second.string(), files[i].first);
    featureset::write_afv1(featureset::normalize(feat, stats, !raw_voicing),
                           (fs::path(out_dir) / (files[i].first + ".afv1")).string());
  });
  std::cout << "# normalized\n" << files.size() << "\n";
  return 0;
}

int cmd_kernel(std::size_t l_t, std::size_t l_f) {
  augment::TriangularKernel k;
  try {
    k = augment::make_kernel(l_t, l_f);
  } catch (const std::invalid_argument&) {
    std::cerr << "kernel: sizes must be odd positive integers\n";
    return 2;
  }
  std::cout << "# triangular kernel\tl_t=" << l_t << "\tl_f=" << l_f << "\n";
  for (std::size_t t = 0; t < k.l_t; ++t) {
    for (std::size_t f = 0; f < k.l_f; ++f)
      std::cout << (f ? "\t" : "") << fmt_double(k.weight(t, f));
    std::cout << "\n";
  }
  return 0;
}

int cmd_augment(const std::string& feature_dir, const std::string& out_dir,
                const augment::SmoothingPolicy& policy, std::uint64_t step,
                std::uint64_t total, std::size_t forced_lt, std::size_t forced_lf,
                int jobs) {
  const auto files = list_features(feature_dir);
  fs::create_directories(out_dir);
  struct Row {
    std::size_t l_t = 1, l_f = 1;
  };
  std::vector<Row> rows(files.size());
  const bool forced = forced_lt > 0 || forced_lf > 0;
  const augment::TriangularKernel forced_kernel =
      forced ? augment::make_kernel(std::max<std::size_t>(forced_lt, 1),
                                    std::max<std::size_t>(forced_lf, 1))
             : augment::make_kernel(1, 1);

  parallel_for(files.size(), jobs, [&](std::size_t i) {
    auto feat = featureset::read_afv1(files[i].second.string(), files[i].first);
    if (forced) {
      const MelSpectrogram smoothed =
          augment::smooth_mel(featureset::mel_of(feat), forced_kernel);
      for (std::size_t t = 0; t < feat.n_frames; ++t)
        for (std::size_t m = 0; m < featureset::kMelDims; ++m)
          feat.at(t, m) = static_cast<float>(smoothed.grid.at(t, m));
      rows[i] = {forced_kernel.l_t, forced_kernel.l_f};
      featureset::write_afv1(feat, (fs::path(out_dir) / (files[i].first + ".afv1")).string());
      return;
    }
    const auto result = augment::augment_step(feat, policy, step, total, files[i].first);
    rows[i] = {result.l_t, result.l_f};
    featureset::write_afv1(result.feature,
                           (fs::path(out_dir) / (files[i].first + ".afv1")).string());
  });

  std::ofstream log((fs::path(out_dir) / "augment_log.tsv").string(),
                    std::ios::binary | std::ios::trunc);
  log << "# id\tl_t\tl_f\n";
  std::cout << "# id\tl_t\tl_f\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    log << files[i].first << "\t" << rows[i].l_t << "\t" << rows[i].l_f << "\n";
    std::cout << files[i].first << "\t" << rows[i].l_t << "\t" << rows[i].l_f << "\n";
  }
  return 0;
}

int cmd_msd(const std::string& ref_dir, const std::string& other_dir, std::size_t bins,
            double lo, double hi, bool per_utterance, double min_energy_db, int jobs) {
  const auto ref_files = list_features(ref_dir);
  std::vector<std::vector<double>> frame_values(ref_files.size());
  std::vector<double> utt_means(ref_files.size());
  parallel_for(ref_files.size(), jobs, [&](std::size_t i) {
    const auto ref = featureset::read_afv1(ref_files[i].second.string(), ref_files[i].first);
    const fs::path other_path = fs::path(other_dir) / (ref_files[i].first + ".afv1");
    const auto other = featureset::read_afv1(other_path.string(), ref_files[i].first);
    const MelSpectrogram ref_mel = featureset::mel_of(ref);
    const auto r = metrics::msd(ref_mel, featureset::mel_of(other));
    for (std::size_t t = 0; t < r.n_frames(); ++t) {
      if (!std::isnan(min_energy_db)) {
        double peak = -1e300;
        for (std::size_t m = 0; m < ref_mel.n_mels(); ++m)
          peak = std::max(peak, ref_mel.grid.at(t, m));
        if (peak < min_energy_db) continue;
      }
      frame_values[i].push_back(r.per_frame[t]);
    }
    utt_means[i] = r.utterance_mean;
  });

  std::vector<double> pooled;
  for (const auto& v : frame_values) pooled.insert(pooled.end(), v.begin(), v.end());
  const std::vector<double>& values = per_utterance
                                          ? utt_means
                                          : pooled;
  const auto h = metrics::normalized_histogram(values, bins, lo, hi);
  print_histogram(std::cout, h, per_utterance ? "per-utterance" : "per-frame");
  double mean = 0.0;
  for (double v : values) mean += v;
  if (!values.empty()) mean /= static_cast<double>(values.size());
  std::cout << "# mean\n" << fmt_double(mean) << "\n";
  return 0;
}

int cmd_sweep(const std::string& ref_dir, const std::string& sizes_spec, std::size_t bins,
              double lo, double hi, double min_energy_db, int jobs) {
  const auto files = list_features(ref_dir);
  std::vector<MelSpectrogram> corpus(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    corpus[i] = featureset::mel_of(featureset::read_afv1(files[i].second.string()));
  });
  metrics::SweepConfig cfg;
  cfg.n_bins = bins;
  cfg.hist_lo = lo;
  cfg.hist_hi = hi;
  cfg.min_energy_db = min_energy_db;
  const auto rows = metrics::msd_sweep(corpus, parse_sizes(sizes_spec), cfg);

  std::cout << "# l_t\tl_f\tmean\tstd\tp50\tp90\n";
  for (const auto& row : rows)
    std::cout << row.l_t << "\t" << row.l_f << "\t" << fmt_double(row.mean) << "\t"
              << fmt_double(row.stddev) << "\t" << fmt_double(row.p50) << "\t"
              << fmt_double(row.p90) << "\n";
  for (const auto& row : rows)
    print_histogram(std::cout, row.histogram,
                    "l_t=" + std::to_string(row.l_t) + "\tl_f=" + std::to_string(row.l_f));
  std::cout << "# per-utterance means\n# id";
  for (const auto& row : rows) std::cout << "\tl" << row.l_t << "x" << row.l_f;
  std::cout << "\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::cout << files[i].first;
    for (const auto& row : rows) std::cout << "\t" << fmt_double(row.per_utterance_means[i]);
    std::cout << "\n";
  }
  return 0;
}

std::atomic<server::Server*> g_server{nullptr};

int cmd_serve(const std::string& feature_dir, const std::string& bind_address,
              std::uint16_t port, const augment::SmoothingPolicy& policy) {
  std::map<std::string, featureset::AcousticFeature> corpus;
  for (const auto& [id, path] : list_features(feature_dir))
    corpus.emplace(id, featureset::read_afv1(path.string(), id));

  server::Server srv(std::move(corpus), policy);
  srv.start(bind_address, port);
  g_server = &srv;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.exchange(nullptr)) s->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (auto* s = g_server.exchange(nullptr)) s->stop();
  });
  std::cout << "listening on " << bind_address << ":" << srv.port() << std::endl;
  // Block until a signal handler stops the server.
  while (g_server.load() != nullptr) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  srv.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic feature extraction and mel smoothing augmentation toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON config file; flags override file values");
  app.config_formatter(std::make_shared<JsonConfig>());
  int jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads for per-utterance work")
      ->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "Extract 102-dim acoustic features from WAVs");
  std::string manifest_path, out_dir;
  extract->add_option("manifest", manifest_path, "JSON-lines manifest")->required();
  extract->add_option("--out", out_dir, "Output directory for AFV1 files")->required();
  pipeline::ExtractConfig ext_cfg;
  extract->add_option("--pitch-fmin", ext_cfg.pitch.f_min_hz, "Pitch search floor (Hz)")
      ->capture_default_str();
  extract->add_option("--pitch-fmax", ext_cfg.pitch.f_max_hz, "Pitch search ceiling (Hz)")
      ->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "Accumulate global normalization statistics");
  std::string stats_features, stats_out;
  stats->add_option("--features", stats_features, "AFV1 directory")->required();
  stats->add_option("--out", stats_out, "Output stats JSON path")->required();

  // normalize
  auto* normalize = app.add_subcommand("normalize", "Apply global mean/variance normalization");
  std::string norm_features, norm_stats, norm_out;
  bool raw_voicing = false;
  normalize->add_option("--features", norm_features, "AFV1 directory")->required();
  normalize->add_option("--stats", norm_stats, "Stats JSON path")->required();
  normalize->add_option("--out", norm_out, "Output directory")->required();
  normalize->add_flag("--raw-voicing", raw_voicing, "Keep the voicing flag as raw {0,1}");

  // kernel
  auto* kernel = app.add_subcommand("kernel", "Dump a triangular smoothing kernel as TSV");
  std::size_t k_lt = 0, k_lf = 0;
  kernel->add_option("l_t", k_lt, "Time-axis size (odd)")->required();
  kernel->add_option("l_f", k_lf, "Frequency-axis size (odd)")->required();

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "Smooth mel columns per the training schedule");
  std::string aug_features, aug_out;
  std::uint64_t aug_step = 0, aug_total = 600000;
  std::size_t forced_lt = 0, forced_lf = 0;
  CommonPolicyFlags aug_policy;
  augment_cmd->add_option("--features", aug_features, "AFV1 directory")->required();
  augment_cmd->add_option("--out", aug_out, "Output directory")->required();
  augment_cmd->add_option("--step", aug_step, "Training step")->capture_default_str();
  augment_cmd->add_option("--total", aug_total, "Total training steps")->capture_default_str();
  augment_cmd->add_option("--lt", forced_lt, "Force time size (bypasses sampling)");
  augment_cmd->add_option("--lf", forced_lf, "Force frequency size (bypasses sampling)");
  aug_policy.attach(augment_cmd);

  // msd
  auto* msd_cmd = app.add_subcommand("msd", "Mel-spectral distance between two feature sets");
  std::string msd_ref, msd_other;
  std::size_t msd_bins = 50;
  double msd_lo = 0.0, msd_hi = 25.0;
  bool msd_per_utt = false;
  double msd_min_energy = std::numeric_limits<double>::quiet_NaN();
  msd_cmd->add_option("--ref", msd_ref, "Reference AFV1 directory")->required();
  msd_cmd->add_option("--other", msd_other, "Comparison AFV1 directory")->required();
  msd_cmd->add_option("--bins", msd_bins, "Histogram bin count")->capture_default_str();
  msd_cmd->add_option("--lo", msd_lo, "Histogram lower edge (dB)")->capture_default_str();
  msd_cmd->add_option("--hi", msd_hi, "Histogram upper edge (dB)")->capture_default_str();
  msd_cmd->add_flag("--per-utterance", msd_per_utt, "Histogram over per-utterance means");
  msd_cmd->add_option("--min-energy-db", msd_min_energy,
                      "Exclude frames whose reference peak mel dB is below this");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "MSD histograms across smoothing filter sizes");
  std::string sweep_ref, sweep_sizes = "1x1,3x1,5x1,5x3";
  std::size_t sweep_bins = 50;
  double sweep_lo = 0.0, sweep_hi = 25.0;
  double sweep_min_energy = std::numeric_limits<double>::quiet_NaN();
  sweep->add_option("--ref", sweep_ref, "Reference AFV1 directory")->required();
  sweep->add_option("--sizes", sweep_sizes, "Comma-separated LTxLF pairs")->capture_default_str();
  sweep->add_option("--bins", sweep_bins, "Histogram bin count")->capture_default_str();
  sweep->add_option("--lo", sweep_lo, "Histogram lower edge (dB)")->capture_default_str();
  sweep->add_option("--hi", sweep_hi, "Histogram upper edge (dB)")->capture_default_str();
  sweep->add_option("--min-energy-db", sweep_min_energy,
                    "Exclude frames whose reference peak mel dB is below this");

  // serve
  auto* serve = app.add_subcommand("serve", "Stream schedule-aware augmented features over TCP");
  std::string srv_features, srv_bind = "127.0.0.1";
  std::uint16_t srv_port = 7707;
  CommonPolicyFlags srv_policy;
  serve->add_option("--features", srv_features, "AFV1 directory")->required();
  serve->add_option("--bind", srv_bind, "Bind address")->capture_default_str();
  serve->add_option("--port", srv_port, "TCP port (0 = ephemeral)")->capture_default_str();
  srv_policy.attach(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return cmd_extract(manifest_path, out_dir, jobs, ext_cfg);
    if (*stats) return cmd_stats(stats_features, stats_out, jobs);
    if (*normalize) return cmd_normalize(norm_features, norm_stats, norm_out, raw_voicing, jobs);
    if (*kernel) return cmd_kernel(k_lt, k_lf);
    if (*augment_cmd)
      return cmd_augment(aug_features, aug_out, aug_policy.resolved(), aug_step, aug_total,
                         forced_lt, forced_lf, jobs);
    if (*msd_cmd)
      return cmd_msd(msd_ref, msd_other, msd_bins, msd_lo, msd_hi, msd_per_utt,
                     msd_min_energy, jobs);
    if (*sweep)
      return cmd_sweep(sweep_ref, sweep_sizes, sweep_bins, sweep_lo, sweep_hi,
                       sweep_min_energy, jobs);
    if (*serve) return cmd_serve(srv_features, srv_bind, srv_port, srv_policy.resolved());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
