// SPDX-License-Identifier: Apache-2.0
//
// Built-in synthetic trajectory generators: a finite-volume advection
// diffusion solver on a triangulated square, an analytic vortex-street
// surrogate behind a circular obstacle, and a pulsatile channel flow with a
// next-step inflow channel.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshmask/features.hpp"
#include "meshmask/trajectory.hpp"

namespace meshmask::datasets {

enum class SyntheticKind { kAdvectionDiffusion, kVortexStreetSurrogate, kPulsatileChannel };

SyntheticKind kind_from_string(const std::string& s);
std::string to_string(SyntheticKind k);

enum class Boundary { kNoFlux, kPeriodic, kDirichlet };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::kAdvectionDiffusion;
    int resolution = 22;   // nodes per unit length
    int steps = 50;        // S
    float dt = 0.005f;
    uint64_t seed = 0;
    double jitter = 0.15;  // interior node perturbation, in units of h

    // advection-diffusion
    double diffusivity = 0.01;
    double velocity_x = 0.5, velocity_y = 0.2;
    Boundary boundary = Boundary::kNoFlux;

    // channel flows
    bool obstacle = false;
    double obstacle_x = 0.6, obstacle_y = 0.5, obstacle_r = 0.12;
    double inflow_amplitude = 0.8;
    double inflow_period = 0.6;   // seconds
    double inflow_phase = 0.0;
};

// Triangulates the unit square (advection-diffusion) or a 2:1 channel
// (vortex / pulsatile), assigning node types: inflow on the left boundary,
// outflow on the right, wall on top/bottom and around the obstacle, fluid
// inside. Without an obstacle the n x n square yields exactly 2(n-1)^2
// triangles.
mesh::MeshGraph triangulate_domain(const SyntheticSpec& spec);

// Explicit flux-form finite-volume step of dc/dt + a.grad(c) = nu lap(c).
// Total lumped mass is conserved to machine accuracy under periodic
// boundaries; `mass_trace`, when given, records it per step in doubles.
mesh::Trajectory simulate_advection_diffusion(const SyntheticSpec& spec,
                                              std::vector<double>* mass_trace = nullptr);

// Analytic surrogate of a vortex street: potential-flow deflection around
// the obstacle plus a traveling wake oscillation. Two velocity components.
mesh::Trajectory simulate_vortex_street(const SyntheticSpec& spec);

// Parabolic inlet profile scaled by a periodic waveform, advected downstream
// with damping. The inlet centerline velocity equals the waveform exactly,
// and the waveform is exported as the next-step inflow channel.
mesh::Trajectory simulate_pulsatile_channel(const SyntheticSpec& spec);

mesh::Trajectory simulate(const SyntheticSpec& spec);

struct DatasetManifest {
    std::string kind;
    int n_train = 0, n_test = 0;
    std::vector<std::string> train_files, test_files;  // relative to the dataset dir
    int dim = 2, q = 0, globals_count = 0;
    bool has_inflow = false;
    mesh::FeatureConfig feature;
    std::vector<double> noise_sigma;  // per dynamic field channel
};

// Generates n_train + n_test trajectories with randomized physical parameters
// and writes them plus manifest.json under out_dir.
DatasetManifest generate_dataset(const SyntheticSpec& spec, int n_train, int n_test,
                                 const std::string& out_dir);

DatasetManifest read_manifest(const std::string& dir);
void write_manifest(const std::string& dir, const DatasetManifest& m);

struct Dataset {
    std::string dir;
    DatasetManifest manifest;
    std::vector<mesh::Trajectory> train;
    std::vector<mesh::Trajectory> test;
};

Dataset load_dataset(const std::string& dir, bool with_test = true);

}  // namespace meshmask::datasets
