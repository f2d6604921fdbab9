#include "prenet/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <iomanip>
#include <optional>
#include <ostream>

#include "prenet/checkpoint.hpp"
#include "prenet/dataset.hpp"
#include "prenet/evaluation.hpp"
#include "prenet/image_io.hpp"
#include "prenet/rain.hpp"
#include "prenet/trainer.hpp"

namespace prenet::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty() || text == "none") return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* flag) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not an integer");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* flag) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  return out;
}

PairNaming parse_naming(const std::string& s) {
  if (s == "identical") return PairNaming::kIdentical;
  if (s == "prefixed") return PairNaming::kPrefixed;
  throw UsageError("--naming must be 'identical' or 'prefixed'");
}

std::string describe(const NetworkConfig& c) {
  std::ostringstream os;
  os << "cell=" << to_string(c.recurrent_cell) << " resblocks=" << to_string(c.resblock_mode)
     << " resblock_count=" << c.resblock_count << " stages=" << c.stages << " input=" << to_string(c.input_mode)
     << " output=" << to_string(c.output_mode) << " channels=" << c.channels;
  return os.str();
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "none" : s;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return v.empty() ? "none" : os.str();
}

std::optional<int> stage_flag(int value) { return value > 0 ? std::optional<int>(value) : std::nullopt; }

void check_stage(std::optional<int> stage, const NetworkConfig& config) {
  if (stage && *stage > config.stages) {
    throw UsageError("--stop-at-stage " + std::to_string(*stage) + " exceeds the model's " +
                     std::to_string(config.stages) + " stages");
  }
}

// Network flags shared by params and train. Unset overrides keep the arch preset.
struct NetworkFlags {
  std::string arch = "prenet";
  std::string cell;
  std::string resblocks;
  std::string input_mode;
  std::string output_mode;
  int stages = 6;
  int channels = 32;
  int resblock_count = 5;

  void attach(CLI::App* app) {
    app->add_option("--arch", arch, "prn | prenet | prn-r | prenet-r")->capture_default_str();
    app->add_option("--cell", cell, "override recurrent cell: none | lstm | gru");
    app->add_option("--resblocks", resblocks, "override ResBlock mode: distinct | recursive");
    app->add_option("--stages", stages, "recursive stages T")->capture_default_str();
    app->add_option("--channels", channels, "feature channels")->capture_default_str();
    app->add_option("--resblock-count", resblock_count, "ResBlocks (or unfoldings) per stage")->capture_default_str();
    app->add_option("--input-mode", input_mode, "concat_y | x_only (default concat_y)");
    app->add_option("--output-mode", output_mode, "residual | direct (default residual)");
  }

  NetworkConfig resolve() const {
    NetworkConfig c = NetworkConfig::from_arch(arch);
    if (!cell.empty()) c.recurrent_cell = parse_recurrent_cell(cell);
    if (!resblocks.empty()) c.resblock_mode = parse_resblock_mode(resblocks);
    if (!input_mode.empty()) c.input_mode = parse_input_mode(input_mode);
    if (!output_mode.empty()) c.output_mode = parse_output_mode(output_mode);
    c.stages = stages;
    c.channels = channels;
    c.resblock_count = resblock_count;
    c.validate();
    return c;
  }
};

int cmd_params(const NetworkFlags& flags, std::ostream& out) {
  const NetworkConfig config = flags.resolve();
  for (const auto& [part, count] : parameter_breakdown(config)) out << part << '\t' << count << '\n';
  out << "total\t" << count_parameters(config) << '\n';
  return kSuccess;
}

struct DerainFlags {
  std::string model;
  std::string input;
  std::string output;
  int stop_at_stage = 0;
  std::string dump_stages;
};

void derain_one(const Checkpoint& ck, const fs::path& input, const fs::path& output, std::optional<int> stop,
                const std::string& dump_dir) {
  const Tensor<float> image = load_image(input);
  const auto trace = derain(ck.params, ck.config, image, dump_dir.empty() ? stop : std::nullopt);
  const std::size_t final_index = stop ? static_cast<std::size_t>(*stop - 1) : trace.estimates.size() - 1;
  save_image(trace.estimates[final_index], output);
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    for (std::size_t t = 0; t < trace.estimates.size(); ++t) {
      const fs::path name = input.stem().string() + "_stage" + std::to_string(t + 1) + ".png";
      save_image(trace.estimates[t], fs::path(dump_dir) / name);
    }
  }
}

int cmd_derain(const DerainFlags& flags, std::ostream& err) {
  const Checkpoint ck = load_checkpoint(flags.model);
  const auto stop = stage_flag(flags.stop_at_stage);
  check_stage(stop, ck.config);
  const fs::path input(flags.input);
  if (fs::is_directory(input)) {
    fs::create_directories(flags.output);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      derain_one(ck, f, fs::path(flags.output) / f.filename(), stop, flags.dump_stages);
      err << "derained " << f.string() << '\n';
    }
    return kSuccess;
  }
  if (!fs::exists(input)) throw IoError("input '" + input.string() + "' does not exist");
  derain_one(ck, input, flags.output, stop, flags.dump_stages);
  return kSuccess;
}

struct EvalFlags {
  std::string model;
  std::string data;
  std::string naming = "identical";
  int stop_at_stage = 0;
};

void print_row(std::ostream& out, const ImageMetrics& m) {
  out << m.name << '\t' << std::setprecision(10) << m.psnr << '\t' << m.ssim << '\n';
}

int cmd_eval(const EvalFlags& flags, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(flags.model);
  const auto stop = stage_flag(flags.stop_at_stage);
  check_stage(stop, ck.config);
  ScanOptions scan;
  scan.naming = parse_naming(flags.naming);
  const PairedDataset ds = scan_dataset(flags.data, scan);
  if (ds.pairs.empty()) throw UsageError("dataset '" + flags.data + "' contains no image pairs");
  const auto pairs = load_pairs(ds);
  const auto rows = evaluate(ck.params, ck.config, pairs, stop);
  out << "image\tpsnr\tssim\n";
  for (const auto& r : rows) print_row(out, r);
  print_row(out, mean_metrics(rows));
  return kSuccess;
}

struct SynthFlags {
  std::string out;
  std::string clean_dir;
  int count = 16;
  int size = 100;
  RainParams rain;
};

int cmd_synth(SynthFlags flags, std::ostream& err) {
  flags.rain.validate();
  if (flags.out.empty()) throw UsageError("--out is required");
  const std::uint64_t seed = flags.rain.seed;
  std::vector<std::pair<std::string, Tensor<float>>> cleans;
  if (!flags.clean_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(flags.clean_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) cleans.emplace_back(f.filename().string(), load_image(f));
  } else {
    if (flags.count <= 0 || flags.size <= 0) throw UsageError("--count and --size must be positive");
    for (int i = 0; i < flags.count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04d.png", i);
      cleans.emplace_back(name, synthesize_background(flags.size, flags.size, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
    }
  }
  for (std::size_t i = 0; i < cleans.size(); ++i) {
    RainParams rp = flags.rain;
    rp.seed = seed * 1000003ULL + i;
    const auto pair = synthesize_pair(cleans[i].second, rp);
    write_pair(flags.out, cleans[i].first, pair.rainy, pair.clean);
  }
  err << "wrote " << cleans.size() << " pairs to " << flags.out << '\n';
  return kSuccess;
}

struct TrainFlags {
  NetworkFlags net;
  std::string data;
  std::string val;
  std::string out;
  std::string naming = "identical";
  std::string loss = "neg_ssim";
  std::string lambdas;
  std::string milestones = "30,50,80";
  std::string resume;
  TrainConfig train;
};

int cmd_train(const TrainFlags& flags, std::ostream& err) {
  const NetworkConfig net = flags.net.resolve();
  TrainConfig tc = flags.train;
  tc.lr_milestones = parse_ints(flags.milestones, "--milestones");
  LossSpec loss;
  loss.kind = parse_loss_kind(flags.loss);
  if (!flags.lambdas.empty() && loss.kind != LossKind::kRecNegSsim) {
    throw UsageError("--lambdas only applies to --loss rec_neg_ssim");
  }
  if (loss.kind == LossKind::kRecNegSsim) {
    loss.lambdas = flags.lambdas.empty() ? LossSpec::default_lambdas(net.stages)
                                         : parse_doubles(flags.lambdas, "--lambdas");
  }

  err << "prenet train\n"
      << "  network: arch=" << flags.net.arch << ' ' << describe(net) << '\n'
      << "  loss: " << to_string(loss.kind) << " lambdas=" << join(loss.lambdas) << '\n'
      << "  patch=" << tc.patch_size << " batch=" << tc.batch_size << " epochs=" << tc.epochs
      << " lr=" << tc.lr_initial << " milestones=" << join(tc.lr_milestones) << " decay=" << tc.lr_decay << '\n'
      << "  adam: beta1=" << tc.adam_beta1 << " beta2=" << tc.adam_beta2 << " eps=" << tc.adam_eps
      << " seed=" << tc.seed << '\n';

  tc.validate();
  loss.validate(net.stages);
  if (flags.out.empty()) throw UsageError("--out is required");
  if (tc.epochs > 0 && flags.data.empty()) throw UsageError("--data is required when --epochs > 0");

  ScanOptions scan;
  scan.naming = parse_naming(flags.naming);
  std::vector<ImagePair> train_set;
  std::vector<ImagePair> val_set;
  if (!flags.data.empty()) train_set = load_pairs(scan_dataset(flags.data, scan));
  if (!flags.val.empty()) val_set = load_pairs(scan_dataset(flags.val, scan));
  if (tc.epochs > 0 && train_set.empty()) throw UsageError("training set '" + flags.data + "' is empty");

  TrainOptions options;
  options.progress = &err;
  if (!flags.resume.empty()) options.resume = fs::path(flags.resume);
  const TrainResult result = train(net, tc, loss, train_set, val_set, flags.out, options);
  err << "final checkpoint: " << result.final_checkpoint.string() << '\n';
  return kSuccess;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const ContractError*>(&e)) {
    return kUsage;
  }
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const UnsupportedFormatError*>(&e) ||
      dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const UnsupportedKernelError*>(&e)) {
    return kFormat;
  }
  if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
  return kIo;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive image deraining networks (PRN / PReNet)", "prenet"};
  app.require_subcommand(1);

  NetworkFlags params_flags;
  auto* params = app.add_subcommand("params", "print the parameter count of an architecture");
  params_flags.attach(params);

  DerainFlags derain_flags;
  auto* derain_cmd = app.add_subcommand("derain", "remove rain from an image or a directory of images");
  derain_cmd->add_option("--model", derain_flags.model, "checkpoint file")->required();
  derain_cmd->add_option("--input", derain_flags.input, "PNG file or directory")->required();
  derain_cmd->add_option("--output", derain_flags.output, "output PNG file or directory")->required();
  derain_cmd->add_option("--stop-at-stage", derain_flags.stop_at_stage, "stop the recursion at stage t (1..T)")
      ->check(CLI::PositiveNumber);
  derain_cmd->add_option("--dump-stages", derain_flags.dump_stages, "write every stage estimate into DIR");

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a model on a paired dataset");
  eval->add_option("--model", eval_flags.model, "checkpoint file")->required();
  eval->add_option("--data", eval_flags.data, "dataset root with rain/ and norain/")->required();
  eval->add_option("--naming", eval_flags.naming, "identical | prefixed")->capture_default_str();
  eval->add_option("--stop-at-stage", eval_flags.stop_at_stage, "evaluate stage t instead of the last")
      ->check(CLI::PositiveNumber);

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired rain dataset");
  synth->add_option("--out", synth_flags.out, "dataset root to create")->required();
  synth->add_option("--clean-dir", synth_flags.clean_dir, "use these clean PNGs instead of procedural backgrounds");
  synth->add_option("--count", synth_flags.count, "procedural images")->capture_default_str();
  synth->add_option("--size", synth_flags.size, "procedural image side in px")->capture_default_str();
  synth->add_option("--streaks", synth_flags.rain.streak_count, "streaks per image")->capture_default_str();
  synth->add_option("--angle-min", synth_flags.rain.angle_min, "degrees from vertical")->capture_default_str();
  synth->add_option("--angle-max", synth_flags.rain.angle_max, "degrees from vertical")->capture_default_str();
  synth->add_option("--angle-jitter", synth_flags.rain.angle_jitter, "per-streak deviation")->capture_default_str();
  synth->add_option("--length-min", synth_flags.rain.length_min, "px")->capture_default_str();
  synth->add_option("--length-max", synth_flags.rain.length_max, "px")->capture_default_str();
  synth->add_option("--width-min", synth_flags.rain.width_min, "px")->capture_default_str();
  synth->add_option("--width-max", synth_flags.rain.width_max, "px")->capture_default_str();
  synth->add_option("--intensity-min", synth_flags.rain.intensity_min, "in (0, 0.8]")->capture_default_str();
  synth->add_option("--intensity-max", synth_flags.rain.intensity_max, "in (0, 0.8]")->capture_default_str();
  synth->add_option("--blur", synth_flags.rain.blur_sigma, "Gaussian sigma, px")->capture_default_str();
  synth->add_option("--seed", synth_flags.rain.seed, "random seed")->capture_default_str();

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a network");
  train_flags.net.attach(train_cmd);
  auto& tc = train_flags.train;
  train_cmd->add_option("--data", train_flags.data, "training dataset root");
  train_cmd->add_option("--val", train_flags.val, "validation dataset root");
  train_cmd->add_option("--out", train_flags.out, "output directory for checkpoints and log");
  train_cmd->add_option("--naming", train_flags.naming, "identical | prefixed")->capture_default_str();
  train_cmd->add_option("--loss", train_flags.loss, "mse | neg_ssim | rec_neg_ssim")->capture_default_str();
  train_cmd->add_option("--lambdas", train_flags.lambdas, "comma-separated stage weights (rec_neg_ssim)");
  train_cmd->add_option("--patch", tc.patch_size, "patch size")->capture_default_str();
  train_cmd->add_option("--batch", tc.batch_size, "batch size")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "epochs")->capture_default_str();
  train_cmd->add_option("--lr", tc.lr_initial, "initial learning rate")->capture_default_str();
  train_cmd->add_option("--milestones", train_flags.milestones, "epochs where lr decays, or 'none'")
      ->capture_default_str();
  train_cmd->add_option("--decay", tc.lr_decay, "lr multiplier per milestone")->capture_default_str();
  train_cmd->add_option("--seed", tc.seed, "random seed")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tc.checkpoint_every, "epochs between checkpoints, 0 = final only")
      ->capture_default_str();
  train_cmd->add_option("--validate-every", tc.validate_every, "epochs between validation passes")
      ->capture_default_str();
  train_cmd->add_option("--resume", train_flags.resume, "continue from a checkpoint with trainer state");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (params->parsed()) return cmd_params(params_flags, out);
    if (derain_cmd->parsed()) return cmd_derain(derain_flags, err);
    if (eval->parsed()) return cmd_eval(eval_flags, out);
    if (synth->parsed()) return cmd_synth(synth_flags, err);
    if (train_cmd->parsed()) return cmd_train(train_flags, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kUsage;
}

}  // namespace prenet::cli
