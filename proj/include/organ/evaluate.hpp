// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reconstruction and measurement.  Losses are mean absolute differences on
// the signed {-1,1} grids, so a damaged input's loss against ground truth
// and a reconstruction's loss are directly comparable.

#include <string>
#include <vector>

#include "organ/fracture.hpp"
#include "organ/network.hpp"
#include "organ/tensor.hpp"
#include "organ/voxel.hpp"

namespace organ {

// Inference pass: frozen stats, binarized tanh output.
template <typename Scalar>
VoxelGrid reconstruct(ModelParams<Scalar>& params, const ArchConfig& arch,
                      const VoxelGrid& fractured, int label,
                      double threshold = 0.0) {
  if (fractured.dim != arch.dim)
    throw ShapeError("grid dimension " + std::to_string(fractured.dim) +
                     " does not match the network's " +
                     std::to_string(arch.dim));
  Graph<Scalar> g;
  auto signed_in = to_signed<Scalar>(fractured);
  int x = g.input(grid_to_tensor(signed_in), false);
  auto r = generator_forward(g, params, arch, x, {label}, /*training=*/false,
                             /*trainable=*/false);
  auto out = tensor_to_grid(g.value(r.out));
  auto grid = binarize(out, static_cast<Scalar>(threshold));
  grid.translate = fractured.translate;
  grid.scale = fractured.scale;
  return grid;
}

// Runs up to max_passes reconstructions, feeding each result back in.  A
// later pass only happens while the previous input was still missing more
// than refine_above voxels relative to the latest reconstruction, the
// heavy-damage case where one pass tends to underfill.
template <typename Scalar>
VoxelGrid reconstruct_iterative(ModelParams<Scalar>& params,
                                const ArchConfig& arch,
                                const VoxelGrid& fractured, int label,
                                int max_passes, std::size_t refine_above,
                                double threshold = 0.0) {
  if (max_passes < 1) throw ConfigError("max_passes must be positive");
  VoxelGrid current = fractured;
  for (int pass = 0; pass < max_passes; ++pass) {
    VoxelGrid next = reconstruct(params, arch, current, label, threshold);
    const std::size_t gap = missing_count(current, next);
    current = std::move(next);
    if (gap <= refine_above) break;
  }
  return current;
}

struct EvalRow {
  int label = 0;
  std::string name;
  int count = 0;
  double input_loss = 0;
  double output_loss = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double input_overall = 0;
  double output_overall = 0;
  int total = 0;
};

template <typename Scalar>
EvalReport evaluate(ModelParams<Scalar>& params, const ArchConfig& arch,
                    const std::vector<SamplePair>& corpus,
                    const std::vector<std::string>& names = {},
                    int max_passes = 1, std::size_t refine_above = 0) {
  if (corpus.empty()) throw ConfigError("nothing to evaluate");
  std::vector<EvalRow> rows(arch.n_classes);
  for (int c = 0; c < arch.n_classes; ++c) {
    rows[c].label = c;
    rows[c].name = c < static_cast<int>(names.size())
                       ? names[c]
                       : "class " + std::to_string(c);
  }
  EvalReport rep;
  for (const auto& pair : corpus) {
    auto out = max_passes > 1
                   ? reconstruct_iterative(params, arch, pair.fractured,
                                           pair.label, max_passes,
                                           refine_above)
                   : reconstruct(params, arch, pair.fractured, pair.label);
    const double in_loss = l1_loss(to_signed<Scalar>(pair.fractured),
                                   to_signed<Scalar>(pair.complete));
    const double out_loss =
        l1_loss(to_signed<Scalar>(out), to_signed<Scalar>(pair.complete));
    auto& row = rows.at(pair.label);
    row.count += 1;
    row.input_loss += in_loss;
    row.output_loss += out_loss;
    rep.input_overall += in_loss;
    rep.output_overall += out_loss;
    rep.total += 1;
  }
  for (auto& row : rows) {
    if (row.count) {
      row.input_loss /= row.count;
      row.output_loss /= row.count;
      rep.rows.push_back(row);
    }
  }
  rep.input_overall /= rep.total;
  rep.output_overall /= rep.total;
  return rep;
}

// ---- fracture-size sweep ----

struct SweepPoint {
  int size = 0;              // fracture diameter m
  int trials = 0;
  double missing_fraction = 0;  // removed voxels / object voxels
  double recovery = 0;          // removed voxels restored by the network
  double misplaced = 0;         // voxels added outside the ground truth
};

// For each fracture size, damages every object `draws` times with a single
// fracture of that size and measures how much of the removed material the
// network restores.
template <typename Scalar>
std::vector<SweepPoint> fracture_sweep(ModelParams<Scalar>& params,
                                       const ArchConfig& arch,
                                       const std::vector<VoxelGrid>& objects,
                                       const std::vector<int>& labels,
                                       int size_lo, int size_hi, int draws,
                                       std::uint64_t seed) {
  if (objects.empty()) throw ConfigError("sweep needs objects");
  if (objects.size() != labels.size())
    throw ConfigError("one label per object expected");
  if (size_lo < 1 || size_hi < size_lo)
    throw ConfigError("bad sweep size range");
  std::vector<SweepPoint> points;
  for (int m = size_lo; m <= size_hi; ++m) {
    SweepPoint pt;
    pt.size = m;
    FractureParams fp;
    fp.n_lo = fp.n_hi = 1;
    fp.m_lo = fp.m_hi = m;
    fp.seed = seed;
    double removed_total = 0, recovered_total = 0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      for (int d = 0; d < draws; ++d) {
        Rng rng = Rng::child(seed, (std::uint64_t(m) << 32) ^
                                       (std::uint64_t(i) << 8) ^
                                       std::uint64_t(d));
        auto pair = simulate_fracture(objects[i], fp, rng, labels[i]);
        auto out = reconstruct(params, arch, pair.fractured, labels[i]);
        std::size_t recovered = 0, misplaced = 0;
        for (std::size_t v = 0; v < pair.complete.size(); ++v) {
          const bool was_removed =
              pair.complete.occupancy[v] && !pair.fractured.occupancy[v];
          if (was_removed && out.occupancy[v]) ++recovered;
          if (out.occupancy[v] && !pair.complete.occupancy[v]) ++misplaced;
        }
        removed_total += double(pair.removed);
        recovered_total += double(recovered);
        pt.missing_fraction +=
            pair.removed
                ? double(pair.removed) / double(occupied_count(pair.complete))
                : 0.0;
        pt.misplaced += double(misplaced);
        ++pt.trials;
      }
    }
    pt.recovery = removed_total > 0 ? recovered_total / removed_total : 1.0;
    pt.missing_fraction /= pt.trials;
    pt.misplaced /= pt.trials;
    points.push_back(pt);
  }
  return points;
}

// ---- report rendering (implemented in report.cpp) ----

std::string report_to_text(const EvalReport& rep);
std::string report_to_json(const EvalReport& rep);
std::string sweep_to_csv(const std::vector<SweepPoint>& points);
std::vector<SweepPoint> sweep_from_csv(const std::string& text);

}  // namespace organ
