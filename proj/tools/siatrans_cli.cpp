#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "siatrans/checkpoint.hpp"
#include "siatrans/cost.hpp"
#include "siatrans/gradcheck.hpp"
#include "siatrans/pipeline.hpp"

namespace fs = std::filesystem;
using namespace siatrans;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Model options shared by the commands that build a network.
struct ModelOptions {
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::optional<std::size_t> image_size;
  std::optional<bool> adaptive_fusion, interactive, siamese;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& app) {
    app.add_option("--preset", preset, "Base model layout")->check(CLI::IsMember({"desk", "full"}));
    app.add_option("--model", overrides, "Model field override KEY=VALUE (repeatable)");
    app.add_option("--image-size", image_size, "Input side S");
    app.add_option("--adaptive-fusion", adaptive_fusion, "Adaptive fusion in the decoder (true/false)");
    app.add_option("--interactive", interactive, "Key/Value exchange in the fusion module (true/false)");
    app.add_option("--siamese", siamese, "One shared backbone for both modalities (true/false)");
    app.add_option("--seed", seed, "Initialization seed");
  }

  ModelConfig build() const {
    auto c = preset == "full" ? ModelConfig::full_scale() : ModelConfig::desk();
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--model expects KEY=VALUE, got '" + kv + "'");
      try {
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
      } catch (const DataError& e) {
        throw UsageError(std::string("--model: ") + e.what());
      }
    }
    if (image_size) c.encoder.image_size = *image_size;
    if (adaptive_fusion) c.decoder.adaptive_fusion = *adaptive_fusion;
    if (interactive) c.cmf.interactive = *interactive;
    if (siamese) c.encoder.siamese = *siamese;
    if (seed) c.seed = *seed;
    c.sync();
    c.validate();
    return c;
  }
};

std::vector<PreparedPair> load_split(const DatasetIndex& index, std::size_t side, bool with_gt) {
  std::vector<PreparedPair> data;
  for (const auto& id : index.ids) {
    PreparedPair p = with_gt ? preprocess_pair(index.rgb_path(id), index.depth_path(id), index.gt_path(id), side)
                             : preprocess_inputs(read_png(index.rgb_path(id)), read_png(index.depth_path(id)), side);
    p.id = id;
    for (const auto& w : p.warnings) std::cerr << "warning: " << id << ": " << w << "\n";
    data.push_back(std::move(p));
  }
  return data;
}

GatePolicy parse_policy(const std::string& s) {
  if (s == "gated") return GatePolicy::Gated;
  if (s == "cross") return GatePolicy::Cross;
  return GatePolicy::Self;
}

void print_record(std::ostream& os, const QualityRecord& r) {
  os << r.pair_id << '\t' << std::fixed << std::setprecision(6) << r.probability << '\t' << r.gate_mae << '\t'
     << to_string(r.decision) << '\n';
}

std::unique_ptr<SiaTrans> open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw DataError("checkpoint '" + path + "' not found");
  return load_checkpoint(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D salient object detection with a Siamese transformer"};
  app.set_config("--config", "", "Text file of key=value lines; [section] headers select a subcommand");
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset directory");
  ModelOptions train_model;
  train_model.attach(*train_cmd);
  RunConfig run;
  std::string train_data, train_out, init_ckpt;
  double lr = run.adam.lr;
  bool no_classification = false;
  train_cmd->add_option("--data", train_data, "Dataset root with RGB/, depth/, GT/")->required();
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints")->required();
  train_cmd->add_option("--init", init_ckpt, "Start from this checkpoint");
  train_cmd->add_option("--batch-size", run.batch_size)->capture_default_str();
  train_cmd->add_option("--epochs", run.epochs)->capture_default_str();
  train_cmd->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", run.adam.beta1)->capture_default_str();
  train_cmd->add_option("--beta2", run.adam.beta2)->capture_default_str();
  train_cmd->add_option("--adam-eps", run.adam.eps)->capture_default_str();
  train_cmd->add_option("--milestones", run.milestones, "Epochs at which the rate decays")->capture_default_str()->expected(0, CLI::detail::expected_max_vector_size);
  train_cmd->add_option("--decay", run.decay, "Decay factor")->capture_default_str();
  train_cmd->add_option("--max-steps", run.max_steps, "Stop after this many steps (0 = no limit)");
  train_cmd->add_option("--checkpoint-every", run.checkpoint_every, "Epoch interval for checkpoints (0 = final only)");
  train_cmd->add_option("--data-seed", run.data_seed, "Shuffle seed")->capture_default_str();
  train_cmd->add_flag("--no-classification", no_classification, "Drop the depth-quality classification term");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Predict saliency maps with the quality gate");
  std::string infer_ckpt, infer_rgb, infer_depth, infer_out, infer_data, infer_out_dir, policy_name = "gated";
  infer_cmd->add_option("--checkpoint", infer_ckpt)->required();
  auto* rgb_opt = infer_cmd->add_option("--rgb", infer_rgb, "RGB image");
  auto* depth_opt = infer_cmd->add_option("--depth", infer_depth, "Depth image");
  auto* out_opt = infer_cmd->add_option("--out", infer_out, "Output map (8-bit PNG)");
  auto* data_opt = infer_cmd->add_option("--data", infer_data, "Dataset root (batch mode)");
  auto* dir_opt = infer_cmd->add_option("--out-dir", infer_out_dir, "Output directory (batch mode)");
  rgb_opt->needs(depth_opt)->needs(out_opt)->excludes(data_opt);
  data_opt->needs(dir_opt);
  infer_cmd->add_option("--policy", policy_name, "Fusion mode selection")
      ->check(CLI::IsMember({"gated", "cross", "self"}))
      ->capture_default_str();

  // label-depth
  auto* label_cmd = app.add_subcommand("label-depth", "Label depth quality with a baseline checkpoint");
  std::string label_ckpt, label_data, label_out;
  label_cmd->add_option("--checkpoint", label_ckpt, "Baseline trained on the other split")->required();
  label_cmd->add_option("--data", label_data, "Split to label")->required();
  label_cmd->add_option("--out", label_out, "Label file (default <data>/labels.tsv)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  std::string eval_pred, eval_gt, eval_out;
  eval_cmd->add_option("--pred", eval_pred)->required();
  eval_cmd->add_option("--gt", eval_gt)->required();
  eval_cmd->add_option("--out", eval_out, "Report directory")->required();

  // count-params
  auto* count_cmd = app.add_subcommand("count-params", "Report parameters and MACs");
  ModelOptions count_model;
  count_model.preset = "full";
  count_model.attach(*count_cmd);
  std::optional<std::size_t> count_size;
  std::optional<double> expect_params, expect_macs;
  double tolerance = 0.10;
  count_cmd->add_option("--size", count_size, "Input side (default: the model's)");
  count_cmd->add_option("--expect-params", expect_params, "Reference parameter count in millions");
  count_cmd->add_option("--expect-macs", expect_macs, "Reference MACs in billions");
  count_cmd->add_option("--tolerance", tolerance, "Relative band around the references")->capture_default_str();

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  ModelOptions grad_model;
  grad_model.attach(*grad_cmd);
  std::size_t grad_probes = 5;
  grad_cmd->add_option("--probes", grad_probes, "Parameter tensors probed end to end")->capture_default_str();

  // make-toy
  auto* toy_cmd = app.add_subcommand("make-toy", "Write a synthetic RGB-D dataset");
  std::string toy_out;
  std::size_t toy_count = 8, toy_side = 64;
  std::uint64_t toy_seed = 1;
  bool toy_degrade = false;
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--count", toy_count)->capture_default_str();
  toy_cmd->add_option("--size", toy_side)->capture_default_str();
  toy_cmd->add_option("--seed", toy_seed)->capture_default_str();
  toy_cmd->add_flag("--degrade-odd", toy_degrade, "Replace odd pairs' depth with noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) {
      const auto config = train_model.build();
      SiaTrans model(config);
      if (!init_ckpt.empty()) load_checkpoint_into(model, init_ckpt);
      run.adam.lr = lr;
      run.classification = !no_classification;
      run.output_dir = train_out;
      run.model = config;
      const auto index = DatasetIndex::scan(train_data);
      if (run.classification && index.labels.empty()) {
        throw DataError("no labels.tsv under '" + train_data + "'; run label-depth or pass --no-classification");
      }
      const auto data = load_split(index, config.encoder.image_size, true);
      const auto history = train(model, data, run.classification ? &index.labels : nullptr, run, &std::cout);
      std::cout << "steps " << history.steps.size() << " final "
                << (fs::path(train_out) / "final.ckpt").string() << "\n";
    } else if (*infer_cmd) {
      const auto model = open_checkpoint(infer_ckpt);
      const auto policy = parse_policy(policy_name);
      const std::size_t S = model->config().encoder.image_size;
      if (!infer_rgb.empty()) {
        auto pair = preprocess_inputs(read_png(infer_rgb), read_png(infer_depth), S);
        pair.id = fs::path(infer_rgb).stem().string();
        for (const auto& w : pair.warnings) std::cerr << "warning: " << w << "\n";
        const auto r = infer(*model, pair, policy);
        write_map_png(infer_out, r.final_map);
        print_record(std::cout, r.record);
      } else if (!infer_data.empty()) {
        const auto index = DatasetIndex::scan(infer_data, false);
        fs::create_directories(infer_out_dir);
        std::ofstream records(fs::path(infer_out_dir) / "records.tsv");
        for (const auto& pair : load_split(index, S, false)) {
          const auto r = infer(*model, pair, policy);
          write_map_png((fs::path(infer_out_dir) / (pair.id + ".png")).string(), r.final_map);
          print_record(records, r.record);
          print_record(std::cout, r.record);
        }
      } else {
        throw UsageError("infer needs --rgb/--depth/--out or --data/--out-dir");
      }
    } else if (*label_cmd) {
      const auto baseline = open_checkpoint(label_ckpt);
      const auto index = DatasetIndex::scan(label_data, false);
      const auto records =
          label_depth(*baseline, load_split(index, baseline->config().encoder.image_size, false));
      const std::string out = label_out.empty() ? index.labels_path() : label_out;
      std::ofstream os(out);
      if (!os) throw DataError("cannot write '" + out + "'");
      write_quality_records(os, records);
      std::size_t poor = 0;
      for (const auto& r : records) poor += r.label == 0;
      std::cout << records.size() << " pairs labeled, " << poor << " poor, written to " << out << "\n";
    } else if (*eval_cmd) {
      const auto r = evaluate_directories(eval_pred, eval_gt, eval_out);
      std::cout << std::fixed << std::setprecision(4) << "images " << r.images.size() << " mae " << r.mae
                << " max_f " << r.max_f.value << " s " << r.s_measure << " max_e " << r.max_e << "\n";
      if (r.f_skipped) std::cout << r.f_skipped << " images with empty GT and prediction skipped for F\n";
    } else if (*count_cmd) {
      const auto config = count_model.build();
      const auto report = count_cost(config, count_size.value_or(config.encoder.image_size));
      print_cost(std::cout, report);
      bool inside = true;
      auto check = [&](const char* what, double value, std::optional<double> ref) {
        if (!ref) return;
        const bool ok = std::fabs(value - *ref) <= tolerance * *ref;
        std::cout << what << ' ' << value << " vs " << *ref << " +-" << tolerance * 100 << "%: "
                  << (ok ? "inside" : "OUTSIDE") << "\n";
        inside = inside && ok;
      };
      check("params(M)", report.params_m(), expect_params);
      check("macs(G)", report.macs_g(), expect_macs);
      if (!inside) return kNumeric;
    } else if (*grad_cmd) {
      bool ok = true;
      auto show = [&](const GradCase& c) {
        std::cout << std::left << std::setw(24) << c.name << std::scientific << std::setprecision(2)
                  << c.report.max_rel_err << "  < " << c.tolerance << "  " << (c.passed() ? "ok" : "FAIL") << "\n";
        ok = ok && c.passed();
      };
      for (const auto& c : op_gradient_suite()) show(c);
      show(end_to_end_gradcheck(grad_model.build(), grad_probes));
      if (!ok) return kNumeric;
    } else if (*toy_cmd) {
      write_toy_dataset(toy_out, make_toy_pairs(toy_count, toy_side, toy_seed, toy_degrade));
      std::cout << toy_count << " pairs written to " << toy_out << "\n";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  }
  return kOk;
}
