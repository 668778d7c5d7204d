// SPDX-License-Identifier: Apache-2.0
//
// organ command line: voxelize meshes, fracture voxel objects into training
// pairs, train the completion network, and run or evaluate a trained model.
//
// Exit codes: 0 success, 1 runtime failure (bad data, io, non-finite loss),
// 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "organ/binvox.hpp"
#include "organ/checkpoint.hpp"
#include "organ/config_io.hpp"
#include "organ/dataset.hpp"
#include "organ/evaluate.hpp"
#include "organ/fracture.hpp"
#include "organ/mesh.hpp"
#include "organ/training.hpp"
#include "organ/voxelize.hpp"

namespace fs = std::filesystem;

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw organ::IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw organ::IoError("write failed: " + path);
}

struct Subset {
  std::vector<organ::VoxelGrid> grids;
  std::vector<int> labels;
  int dim = 0;
};

// Pick one split ("train", "test") or "all" out of a loaded object set.
Subset pick_split(organ::ObjectSet&& set, const std::string& split) {
  Subset out;
  out.dim = set.dim;
  for (std::size_t i = 0; i < set.grids.size(); ++i) {
    if (split != "all" && set.splits[i] != split) continue;
    out.grids.push_back(std::move(set.grids[i]));
    out.labels.push_back(set.labels[i]);
  }
  if (out.grids.empty())
    throw organ::ConfigError("no objects in split '" + split + "'");
  return out;
}

// ---------------------------------------------------------------- voxelize

struct VoxelizeArgs {
  std::string input, output;
  int dim = 32;
  bool no_fill = false;
};

int run_voxelize(const VoxelizeArgs& a) {
  const organ::Mesh mesh = organ::load_mesh(a.input);
  if (mesh.empty())
    std::cerr << "warning: " << a.input << " has no triangles\n";
  const organ::VoxelGrid grid = organ::voxelize_mesh(mesh, a.dim, !a.no_fill);
  organ::write_binvox_file(a.output, grid);
  std::cout << a.output << ": dim " << grid.dim << ", "
            << organ::occupied_count(grid) << " voxels set\n";
  return 0;
}

// ---------------------------------------------------------------- fracture

struct FractureArgs {
  std::string objects, out_dir, config, split = "train";
  int pairs_per_object = 4;
  organ::FractureParams fp;
};

int run_fracture(const FractureArgs& a, const CLI::App* cmd) {
  organ::FractureParams fp = a.fp;
  if (!a.config.empty()) {
    fp = organ::run_config_from_file(a.config).fracture;
    // Explicit flags win over the config file.
    if (cmd->count("--n-lo")) fp.n_lo = a.fp.n_lo;
    if (cmd->count("--n-hi")) fp.n_hi = a.fp.n_hi;
    if (cmd->count("--m-lo")) fp.m_lo = a.fp.m_lo;
    if (cmd->count("--m-hi")) fp.m_hi = a.fp.m_hi;
    if (cmd->count("--p-sphere")) fp.p_sphere = a.fp.p_sphere;
    if (cmd->count("--seed")) fp.seed = a.fp.seed;
  }
  fp.validate();

  const Subset set = pick_split(organ::load_objects(a.objects), a.split);
  const auto pairs =
      organ::fracture_objects(set.grids, set.labels, fp, a.pairs_per_object);

  fs::create_directories(a.out_dir);
  std::vector<organ::PairEntry> manifest;
  char name[64];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    organ::PairEntry e;
    std::snprintf(name, sizeof name, "pair_%05zu_f.binvox", i);
    e.fractured = name;
    std::snprintf(name, sizeof name, "pair_%05zu_c.binvox", i);
    e.complete = name;
    e.label = pairs[i].label;
    organ::write_binvox_file((fs::path(a.out_dir) / e.fractured).string(),
                             pairs[i].fractured);
    organ::write_binvox_file((fs::path(a.out_dir) / e.complete).string(),
                             pairs[i].complete);
    manifest.push_back(std::move(e));
  }
  const std::string mpath = (fs::path(a.out_dir) / "pairs.jsonl").string();
  organ::write_pair_manifest(mpath, manifest);
  std::cout << "wrote " << pairs.size() << " pairs to " << a.out_dir << " ("
            << mpath << ")\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string objects, out_dir, config, resume;
  int epochs = -1;          // -1: take from config
  int batch_size = -1;
  double lr = -1;
  std::uint64_t seed = 0;
  int gen_every = -1;
  int gen_sign = 0;
  int keep = -1;
  int pairs_per_object = 4;
  std::uint64_t fracture_seed = 0;
  bool refracture = false;
};

void append_progress(const std::string& path, int epoch,
                     const organ::StepStats& s) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw organ::IoError("cannot open for writing: " + path);
  if (fresh)
    out << "epoch,critic_loss,wasserstein,gp,gen_loss,completion\n";
  out << epoch << ',' << s.critic_loss << ',' << s.wasserstein << ',' << s.gp
      << ',' << s.gen_loss << ',' << s.completion << '\n';
}

int run_train(const TrainArgs& a, const CLI::App* cmd) {
  organ::RunConfig rc;
  if (!a.config.empty()) rc = organ::run_config_from_file(a.config);
  if (cmd->count("--epochs")) rc.train.epochs = a.epochs;
  if (cmd->count("--batch-size")) rc.train.batch_size = a.batch_size;
  if (cmd->count("--lr")) rc.train.lr = a.lr;
  if (cmd->count("--seed")) rc.train.seed = a.seed;
  if (cmd->count("--gen-every")) rc.train.gen_every = a.gen_every;
  if (cmd->count("--gen-sign")) rc.train.gen_sign = a.gen_sign;
  if (cmd->count("--keep")) rc.train.checkpoint_keep = a.keep;
  if (cmd->count("--fracture-seed")) rc.fracture.seed = a.fracture_seed;

  Subset set = pick_split(organ::load_objects(a.objects), "train");
  // Without a config file the network adapts to the data resolution; with
  // one, the file is authoritative and a mismatch is an error.
  if (a.config.empty()) {
    rc.arch.dim = set.dim;
  } else if (rc.arch.dim != set.dim) {
    throw organ::ConfigError("objects have dim " + std::to_string(set.dim) +
                             " but config expects " +
                             std::to_string(rc.arch.dim));
  }

  std::unique_ptr<organ::Trainer<float>> tr;
  if (!a.resume.empty()) {
    const auto ck = organ::read_checkpoint(a.resume);
    tr = std::make_unique<organ::Trainer<float>>(
        organ::restore<float>(ck));
    if (cmd->count("--epochs")) {
      // Extending a finished run: only the target count may change.
      organ::TrainConfig ext = tr->config();
      ext.epochs = a.epochs;
      tr = std::make_unique<organ::Trainer<float>>(
          organ::restore<float>(ck, &ext));
    }
  } else {
    tr = std::make_unique<organ::Trainer<float>>(rc.arch, rc.train);
  }

  fs::create_directories(a.out_dir);
  if (a.resume.empty()) {
    std::ostringstream cfg;
    cfg << "{\n  \"arch\": " << organ::arch_to_json(tr->arch())
        << ",\n  \"train\": " << organ::train_to_json(tr->config())
        << ",\n  \"fracture\": " << organ::fracture_to_json(rc.fracture)
        << "\n}\n";
    write_text_file((fs::path(a.out_dir) / "run.json").string(), cfg.str());
  }

  auto corpus = organ::fracture_objects(set.grids, set.labels, rc.fracture,
                                        a.pairs_per_object);
  const std::string progress =
      (fs::path(a.out_dir) / "progress.csv").string();
  const int target = tr->config().epochs;
  while (tr->epoch() < target) {
    if (a.refracture && tr->epoch() > 0) {
      organ::FractureParams fp = rc.fracture;
      fp.seed = rc.fracture.seed + static_cast<std::uint64_t>(tr->epoch());
      corpus = organ::fracture_objects(set.grids, set.labels, fp,
                                       a.pairs_per_object);
    }
    const organ::StepStats s = tr->run_epoch(corpus);
    append_progress(progress, tr->epoch(), s);
    organ::write_checkpoint(
        (fs::path(a.out_dir) / organ::checkpoint_name(tr->epoch())).string(),
        organ::snapshot(*tr));
    organ::prune_checkpoints(a.out_dir, tr->config().checkpoint_keep);
    std::cout << "epoch " << tr->epoch() << '/' << target
              << "  critic " << s.critic_loss << "  w " << s.wasserstein
              << "  gp " << s.gp;
    if (s.gen_stepped)
      std::cout << "  gen " << s.gen_loss << "  completion " << s.completion;
    std::cout << '\n';
    if (!s.finite) {
      std::cerr << "error: non-finite loss at epoch " << tr->epoch()
                << ", stopping\n";
      return 1;
    }
  }
  std::cout << "done: " << tr->gen_steps() << " generator steps, "
            << tr->critic_steps() << " critic steps\n";
  return 0;
}

// ------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string checkpoint, input, output;
  int label = 0;
  int passes = 1;
  std::size_t refine_above = 0;
  double threshold = 0.0;
};

int run_reconstruct(const ReconstructArgs& a) {
  auto [arch, params] =
      organ::load_model<float>(organ::read_checkpoint(a.checkpoint));
  const organ::VoxelGrid in = organ::read_binvox_file(a.input);
  if (organ::occupied_count(in) == 0)
    std::cerr << "warning: input grid is empty\n";
  const organ::VoxelGrid out = organ::reconstruct_iterative(
      params, arch, in, a.label, a.passes, a.refine_above, a.threshold);
  organ::write_binvox_file(a.output, out);
  std::cout << a.output << ": " << organ::occupied_count(out)
            << " voxels set (input had " << organ::occupied_count(in)
            << ")\n";
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, pairs, names, json;
  int passes = 1;
  std::size_t refine_above = 0;
};

int run_eval(const EvalArgs& a) {
  auto [arch, params] =
      organ::load_model<float>(organ::read_checkpoint(a.checkpoint));
  const auto corpus = organ::load_pairs(a.pairs);
  std::vector<std::string> names;
  if (!a.names.empty()) names = organ::read_label_names(a.names);
  const organ::EvalReport rep = organ::evaluate(
      params, arch, corpus, names, a.passes, a.refine_above);
  std::cout << organ::report_to_text(rep);
  if (!a.json.empty()) write_text_file(a.json, organ::report_to_json(rep));
  return 0;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string checkpoint, objects, output, split = "test";
  int size_lo = 1, size_hi = 15, draws = 4;
  std::uint64_t seed = 0;
};

int run_sweep(const SweepArgs& a) {
  auto [arch, params] =
      organ::load_model<float>(organ::read_checkpoint(a.checkpoint));
  const Subset set = pick_split(organ::load_objects(a.objects), a.split);
  const auto points =
      organ::fracture_sweep(params, arch, set.grids, set.labels, a.size_lo,
                            a.size_hi, a.draws, a.seed);
  const std::string csv = organ::sweep_to_csv(points);
  if (a.output.empty()) {
    std::cout << csv;
  } else {
    write_text_file(a.output, csv);
    std::cout << "wrote " << points.size() << " sweep points to " << a.output
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxel object completion pipeline"};
  app.require_subcommand(1);

  VoxelizeArgs vx;
  auto* c_vox = app.add_subcommand("voxelize", "rasterize a mesh to binvox");
  c_vox->add_option("-i,--input", vx.input, "mesh file (.off or .stl)")
      ->required();
  c_vox->add_option("-o,--output", vx.output, "output .binvox")->required();
  c_vox->add_option("-d,--dim", vx.dim, "grid resolution")
      ->check(CLI::Range(1, 1024));
  c_vox->add_flag("--no-fill", vx.no_fill, "keep only the surface shell");

  FractureArgs fr;
  auto* c_fr =
      app.add_subcommand("fracture", "carve training pairs from objects");
  c_fr->add_option("--objects", fr.objects, "object manifest (jsonl)")
      ->required();
  c_fr->add_option("--out-dir", fr.out_dir, "output directory")->required();
  c_fr->add_option("--config", fr.config, "run config json");
  c_fr->add_option("--split", fr.split, "train, test or all");
  c_fr->add_option("--pairs-per-object", fr.pairs_per_object)
      ->check(CLI::PositiveNumber);
  c_fr->add_option("--n-lo", fr.fp.n_lo, "min fracture count");
  c_fr->add_option("--n-hi", fr.fp.n_hi, "max fracture count");
  c_fr->add_option("--m-lo", fr.fp.m_lo, "min fracture size");
  c_fr->add_option("--m-hi", fr.fp.m_hi, "max fracture size");
  c_fr->add_option("--p-sphere", fr.fp.p_sphere, "sphere probability");
  c_fr->add_option("--seed", fr.fp.seed);

  TrainArgs ta;
  auto* c_tr = app.add_subcommand("train", "train the completion network");
  c_tr->add_option("--objects", ta.objects, "object manifest (jsonl)")
      ->required();
  c_tr->add_option("--out-dir", ta.out_dir, "checkpoints and logs")
      ->required();
  c_tr->add_option("--config", ta.config, "run config json");
  c_tr->add_option("--resume", ta.resume, "checkpoint to continue from");
  c_tr->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
  c_tr->add_option("--batch-size", ta.batch_size)
      ->check(CLI::PositiveNumber);
  c_tr->add_option("--lr", ta.lr)->check(CLI::PositiveNumber);
  c_tr->add_option("--seed", ta.seed);
  c_tr->add_option("--gen-every", ta.gen_every)->check(CLI::PositiveNumber);
  c_tr->add_option("--gen-sign", ta.gen_sign, "+1 or -1");
  c_tr->add_option("--keep", ta.keep, "checkpoints to keep")
      ->check(CLI::PositiveNumber);
  c_tr->add_option("--pairs-per-object", ta.pairs_per_object)
      ->check(CLI::PositiveNumber);
  c_tr->add_option("--fracture-seed", ta.fracture_seed);
  c_tr->add_flag("--refracture", ta.refracture,
                 "draw fresh fractures every epoch");

  ReconstructArgs ra;
  auto* c_re = app.add_subcommand("reconstruct", "complete one voxel grid");
  c_re->add_option("--checkpoint", ra.checkpoint)->required();
  c_re->add_option("-i,--input", ra.input, "fractured .binvox")->required();
  c_re->add_option("-o,--output", ra.output, "completed .binvox")
      ->required();
  c_re->add_option("-l,--label", ra.label, "class label")->required();
  c_re->add_option("--passes", ra.passes, "max reconstruction passes")
      ->check(CLI::PositiveNumber);
  c_re->add_option("--refine-above", ra.refine_above,
                   "missing voxels that trigger another pass");
  c_re->add_option("--threshold", ra.threshold, "occupancy cut in (-1,1)");

  EvalArgs ea;
  auto* c_ev = app.add_subcommand("eval", "score reconstructions per class");
  c_ev->add_option("--checkpoint", ea.checkpoint)->required();
  c_ev->add_option("--pairs", ea.pairs, "pair manifest (jsonl)")->required();
  c_ev->add_option("--names", ea.names, "label names json");
  c_ev->add_option("--json", ea.json, "also write the report as json");
  c_ev->add_option("--passes", ea.passes)->check(CLI::PositiveNumber);
  c_ev->add_option("--refine-above", ea.refine_above);

  SweepArgs sa;
  auto* c_sw =
      app.add_subcommand("sweep", "recovery as a function of fracture size");
  c_sw->add_option("--checkpoint", sa.checkpoint)->required();
  c_sw->add_option("--objects", sa.objects, "object manifest (jsonl)")
      ->required();
  c_sw->add_option("--split", sa.split, "train, test or all");
  c_sw->add_option("--size-lo", sa.size_lo)->check(CLI::PositiveNumber);
  c_sw->add_option("--size-hi", sa.size_hi)->check(CLI::PositiveNumber);
  c_sw->add_option("--draws", sa.draws, "fractures per object and size")
      ->check(CLI::PositiveNumber);
  c_sw->add_option("--seed", sa.seed);
  c_sw->add_option("-o,--output", sa.output, "csv path (default stdout)");

  try {
    app.parse(argc, argv);
    if (*c_vox) return run_voxelize(vx);
    if (*c_fr) return run_fracture(fr, c_fr);
    if (*c_tr) return run_train(ta, c_tr);
    if (*c_re) return run_reconstruct(ra);
    if (*c_ev) return run_eval(ea);
    if (*c_sw) return run_sweep(sa);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const organ::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
