// SPDX-License-Identifier: Apache-2.0
#include "meshmask/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace meshmask::datasets {

namespace {

struct GridInfo {
    int nx = 0, ny = 0;
    std::vector<int32_t> node_id;  // nx*ny, -1 where removed
    double hx = 0, hy = 0;
    int32_t id(int ix, int iy) const { return node_id[size_t(iy) * nx + ix]; }
};

bool is_channel(SyntheticKind k) { return k != SyntheticKind::kAdvectionDiffusion; }

// structured grid, alternating diagonals, optional circular hole and jitter
mesh::MeshGraph build_grid(const SyntheticSpec& spec, GridInfo& info) {
    require(spec.resolution >= 3, "triangulate: resolution must be >= 3 per side");
    const bool channel = is_channel(spec.kind);
    const double len_x = channel ? 2.0 : 1.0;
    const int ny = spec.resolution;
    const int nx = channel ? 2 * spec.resolution - 1 : spec.resolution;
    info.nx = nx;
    info.ny = ny;
    info.hx = len_x / double(nx - 1);
    info.hy = 1.0 / double(ny - 1);

    const bool hole = spec.obstacle && channel;
    if (hole) {
        require(spec.obstacle_r > 0 && spec.obstacle_r < 0.4 && spec.obstacle_x > spec.obstacle_r &&
                    spec.obstacle_x < len_x - spec.obstacle_r && spec.obstacle_y > spec.obstacle_r &&
                    spec.obstacle_y < 1.0 - spec.obstacle_r,
                "triangulate: degenerate obstacle geometry");
    }

    auto inside_hole = [&](double x, double y) {
        if (!hole) return false;
        const double dx = x - spec.obstacle_x, dy = y - spec.obstacle_y;
        return dx * dx + dy * dy < spec.obstacle_r * spec.obstacle_r;
    };

    info.node_id.assign(size_t(nx) * ny, -1);
    mesh::MeshGraph g;
    g.dim = 2;
    Rng rng(spec.seed ^ 0xa02bdbf7bb3c0a7ULL);
    std::vector<uint8_t> hole_ring;  // set after removal

    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const double x = ix * info.hx;
            const double y = iy * info.hy;
            if (inside_hole(x, y)) continue;
            const int32_t id = int32_t(g.node_type.size());
            info.node_id[size_t(iy) * nx + ix] = id;
            const bool boundary = ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1;
            double px = x, py = y;
            if (!boundary && spec.jitter > 0) {
                px += rng.uniform(-spec.jitter, spec.jitter) * info.hx;
                py += rng.uniform(-spec.jitter, spec.jitter) * info.hy;
            }
            g.positions.push_back(float(px));
            g.positions.push_back(float(py));
            if (ix == 0)
                g.node_type.push_back(mesh::kInflow);
            else if (ix == nx - 1)
                g.node_type.push_back(mesh::kOutflow);
            else if (iy == 0 || iy == ny - 1)
                g.node_type.push_back(mesh::kWall);
            else
                g.node_type.push_back(mesh::kFluid);
        }
    }

    // triangles on surviving quads, alternating diagonal
    std::vector<std::pair<int32_t, int32_t>> pairs;
    auto add_tri = [&](int32_t a, int32_t b, int32_t c) {
        if (a < 0 || b < 0 || c < 0) return;
        g.cells.push_back(a);
        g.cells.push_back(b);
        g.cells.push_back(c);
        pairs.push_back({a, b});
        pairs.push_back({b, c});
        pairs.push_back({a, c});
    };
    for (int iy = 0; iy + 1 < ny; ++iy) {
        for (int ix = 0; ix + 1 < nx; ++ix) {
            const int32_t v00 = info.id(ix, iy), v10 = info.id(ix + 1, iy);
            const int32_t v01 = info.id(ix, iy + 1), v11 = info.id(ix + 1, iy + 1);
            if ((ix + iy) % 2 == 0) {
                add_tri(v00, v10, v11);
                add_tri(v00, v11, v01);
            } else {
                add_tri(v00, v10, v01);
                add_tri(v10, v11, v01);
            }
        }
    }
    mesh::set_edges_from_pairs(g, pairs);

    // nodes that lost a neighbor to the hole become walls
    if (hole) {
        std::vector<uint8_t> near(size_t(g.num_nodes()), 0);
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                if (info.id(ix, iy) >= 0) continue;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int jx = ix + dx, jy = iy + dy;
                        if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
                        const int32_t id = info.id(jx, jy);
                        if (id >= 0) near[size_t(id)] = 1;
                    }
            }
        for (int64_t i = 0; i < g.num_nodes(); ++i)
            if (near[size_t(i)] && g.node_type[size_t(i)] == mesh::kFluid)
                g.node_type[size_t(i)] = mesh::kWall;
    }
    return g;
}

double triangle_area(const mesh::MeshGraph& g, int64_t t) {
    const int32_t* c = g.cells.data() + t * 3;
    const float* a = g.position(c[0]);
    const float* b = g.position(c[1]);
    const float* d = g.position(c[2]);
    return 0.5 * std::abs(double(b[0] - a[0]) * double(d[1] - a[1]) -
                          double(d[0] - a[0]) * double(b[1] - a[1]));
}

double waveform(const SyntheticSpec& spec, double t_sec) {
    return spec.inflow_amplitude *
           (0.6 + 0.4 * std::sin(2.0 * M_PI * t_sec / spec.inflow_period + spec.inflow_phase));
}

}  // namespace

SyntheticKind kind_from_string(const std::string& s) {
    if (s == "advdiff" || s == "advection_diffusion") return SyntheticKind::kAdvectionDiffusion;
    if (s == "vortex" || s == "vortex_street_surrogate") return SyntheticKind::kVortexStreetSurrogate;
    if (s == "pulsatile" || s == "pulsatile_channel") return SyntheticKind::kPulsatileChannel;
    fail("unknown synthetic dataset kind: " + s);
}

std::string to_string(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::kAdvectionDiffusion: return "advection_diffusion";
        case SyntheticKind::kVortexStreetSurrogate: return "vortex_street_surrogate";
        default: return "pulsatile_channel";
    }
}

mesh::MeshGraph triangulate_domain(const SyntheticSpec& spec) {
    GridInfo info;
    mesh::MeshGraph g = build_grid(spec, info);
    g.validate();
    return g;
}

mesh::Trajectory simulate_advection_diffusion(const SyntheticSpec& spec,
                                              std::vector<double>* mass_trace) {
    GridInfo info;
    SyntheticSpec s2 = spec;
    s2.kind = SyntheticKind::kAdvectionDiffusion;
    s2.obstacle = false;
    mesh::MeshGraph g = build_grid(s2, info);
    const int64_t n = g.num_nodes();

    // lumped node masses from incident triangle areas
    std::vector<double> mass(size_t(n), 0.0);
    for (int64_t t = 0; t < g.num_cells(); ++t) {
        const double a3 = triangle_area(g, t) / 3.0;
        for (int j = 0; j < 3; ++j) mass[size_t(g.cells[size_t(t * 3 + j)])] += a3;
    }

    // flux edges: mesh edges plus wrap edges under periodic boundaries; each
    // carries an explicit displacement so wrap edges look like ordinary ones
    struct FluxEdge {
        int32_t i, j;
        double dx, dy;  // u_j - u_i
    };
    std::vector<FluxEdge> edges;
    for (const auto& [a, b] : mesh::undirected_edges(g)) {
        const float* ua = g.position(a);
        const float* ub = g.position(b);
        edges.push_back({a, b, double(ub[0]) - double(ua[0]), double(ub[1]) - double(ua[1])});
    }
    if (spec.boundary == Boundary::kPeriodic) {
        for (int iy = 0; iy < info.ny; ++iy) {
            const int32_t a = info.id(info.nx - 1, iy), b = info.id(0, iy);
            if (a >= 0 && b >= 0) edges.push_back({a, b, info.hx, 0.0});
        }
        for (int ix = 0; ix < info.nx; ++ix) {
            const int32_t a = info.id(ix, info.ny - 1), b = info.id(ix, 0);
            if (a >= 0 && b >= 0) edges.push_back({a, b, 0.0, info.hy});
        }
    }

    const double ax = spec.velocity_x, ay = spec.velocity_y;
    const double nu = spec.diffusivity;

    // CFL check: worst-case outflow rate per node
    std::vector<double> rate(size_t(n), 0.0);
    for (const auto& e : edges) {
        const double adv_ij = std::max(0.0, ax * e.dx + ay * e.dy);
        const double adv_ji = std::max(0.0, -(ax * e.dx + ay * e.dy));
        rate[size_t(e.i)] += nu + adv_ij;
        rate[size_t(e.j)] += nu + adv_ji;
    }
    double max_rate = 0;
    for (int64_t i = 0; i < n; ++i) max_rate = std::max(max_rate, rate[size_t(i)] / mass[size_t(i)]);
    require(double(spec.dt) * max_rate <= 1.0,
            "advection-diffusion: CFL violation, dt too large (dt*rate=" +
                std::to_string(double(spec.dt) * max_rate) + ")");

    // smooth random initial condition: a few gaussian bumps
    Rng rng(spec.seed ^ 0x517cc1b727220a95ULL);
    std::vector<double> c(size_t(n), 0.0);
    const int n_bumps = 3 + int(rng.uniform_index(3));
    for (int b = 0; b < n_bumps; ++b) {
        const double cx = rng.uniform(0.15, 0.85);
        const double cy = rng.uniform(0.15, 0.85);
        const double w = rng.uniform(0.08, 0.2);
        const double amp = rng.uniform(0.3, 1.0);
        for (int64_t i = 0; i < n; ++i) {
            const double dx = double(g.position(i)[0]) - cx;
            const double dy = double(g.position(i)[1]) - cy;
            c[size_t(i)] += amp * std::exp(-(dx * dx + dy * dy) / (2 * w * w));
        }
    }

    mesh::Trajectory traj;
    traj.graph = std::move(g);
    traj.n_steps = spec.steps;
    traj.n_fields = 1;
    traj.dt = spec.dt;
    traj.globals = {float(nu), float(ax), float(ay)};
    traj.field_names = {"c"};
    traj.fields.resize(size_t(spec.steps) * n);

    std::vector<double> dc(static_cast<size_t>(n));
    for (int t = 0; t < spec.steps; ++t) {
        for (int64_t i = 0; i < n; ++i) traj.fields[size_t(t) * n + size_t(i)] = float(c[size_t(i)]);
        if (mass_trace) {
            double m = 0;
            for (int64_t i = 0; i < n; ++i) m += mass[size_t(i)] * c[size_t(i)];
            mass_trace->push_back(m);
        }
        if (t + 1 == spec.steps) break;
        std::fill(dc.begin(), dc.end(), 0.0);
        for (const auto& e : edges) {
            const double adv = ax * e.dx + ay * e.dy;
            const double r_ij = std::max(0.0, adv);   // outflow i -> j
            const double r_ji = std::max(0.0, -adv);  // outflow j -> i
            // antisymmetric flux into i
            const double flux = nu * (c[size_t(e.j)] - c[size_t(e.i)]) + r_ji * c[size_t(e.j)] -
                                r_ij * c[size_t(e.i)];
            dc[size_t(e.i)] += flux;
            dc[size_t(e.j)] -= flux;
        }
        for (int64_t i = 0; i < n; ++i)
            c[size_t(i)] += double(spec.dt) * dc[size_t(i)] / mass[size_t(i)];
        if (spec.boundary == Boundary::kDirichlet)
            for (int64_t i = 0; i < n; ++i)
                if (traj.graph.node_type[size_t(i)] != mesh::kFluid) c[size_t(i)] = 0.0;
    }
    return traj;
}

mesh::Trajectory simulate_vortex_street(const SyntheticSpec& spec) {
    SyntheticSpec s2 = spec;
    s2.kind = SyntheticKind::kVortexStreetSurrogate;
    s2.obstacle = true;
    GridInfo info;
    mesh::MeshGraph g = build_grid(s2, info);
    const int64_t n = g.num_nodes();

    mesh::Trajectory traj;
    traj.n_steps = spec.steps;
    traj.n_fields = 2;
    traj.dt = spec.dt;
    traj.globals = {float(s2.obstacle_r)};
    traj.field_names = {"vx", "vy"};
    traj.fields.resize(size_t(spec.steps) * n * 2);
    traj.inflow_series.resize(size_t(spec.steps));

    const double ox = s2.obstacle_x, oy = s2.obstacle_y, r = s2.obstacle_r;
    const double wake_amp = 0.35;
    const double k_wave = 2.0 * M_PI / (8.0 * r);
    const double sigma_y = 1.8 * r;

    for (int t = 0; t < spec.steps; ++t) {
        const double t_sec = double(t) * double(spec.dt);
        const double u_in = waveform(s2, t_sec);
        traj.inflow_series[size_t(t)] = float(u_in);
        const double omega = 2.0 * M_PI * u_in / (5.0 * r);
        for (int64_t i = 0; i < n; ++i) {
            const double x = double(g.position(i)[0]);
            const double y = double(g.position(i)[1]);
            const double prof = 4.0 * y * (1.0 - y);
            const double dx = x - ox, dy = y - oy;
            const double rho2 = std::max(dx * dx + dy * dy, 1e-6);
            // potential flow around a cylinder
            double vx = u_in * prof * (1.0 - r * r * (dx * dx - dy * dy) / (rho2 * rho2));
            double vy = -u_in * prof * (r * r * 2.0 * dx * dy / (rho2 * rho2));
            // downstream traveling wake oscillation
            if (dx > 0) {
                const double env = std::exp(-(dy * dy) / (2 * sigma_y * sigma_y)) *
                                   (1.0 - std::exp(-dx / r));
                const double phase = k_wave * dx - omega * t_sec;
                vy += wake_amp * u_in * env * std::sin(phase);
                vx += 0.3 * wake_amp * u_in * env * std::cos(phase) * (dy / sigma_y);
            }
            // no-slip fade near the obstacle surface
            const double rho = std::sqrt(rho2);
            const double fade = std::clamp((rho / r - 1.0) * 2.0, 0.0, 1.0);
            vx *= fade;
            vy *= fade;
            if (g.node_type[size_t(i)] == mesh::kWall && (y < 1e-9 || y > 1 - 1e-9)) {
                vx = 0;
                vy = 0;
            }
            traj.fields[(size_t(t) * n + size_t(i)) * 2 + 0] = float(vx);
            traj.fields[(size_t(t) * n + size_t(i)) * 2 + 1] = float(vy);
        }
    }
    traj.graph = std::move(g);
    return traj;
}

mesh::Trajectory simulate_pulsatile_channel(const SyntheticSpec& spec) {
    require(spec.inflow_period > 2.0 * double(spec.dt),
            "pulsatile: period must exceed 2*dt");
    SyntheticSpec s2 = spec;
    s2.kind = SyntheticKind::kPulsatileChannel;
    s2.obstacle = false;
    GridInfo info;
    mesh::MeshGraph g = build_grid(s2, info);
    const int64_t n = g.num_nodes();

    mesh::Trajectory traj;
    traj.n_steps = spec.steps;
    traj.n_fields = 2;
    traj.dt = spec.dt;
    traj.globals = {float(spec.inflow_period)};
    traj.field_names = {"vx", "vy"};
    traj.fields.resize(size_t(spec.steps) * n * 2);
    traj.inflow_series.resize(size_t(spec.steps));

    const double c_adv = 1.5;   // downstream phase speed
    const double damp = 0.35;   // amplitude decay per unit length
    const double mean_frac = 0.6;
    const double mean_u = spec.inflow_amplitude * mean_frac;

    for (int t = 0; t < spec.steps; ++t) {
        const double t_sec = double(t) * double(spec.dt);
        traj.inflow_series[size_t(t)] = float(waveform(spec, t_sec));
        for (int64_t i = 0; i < n; ++i) {
            const double x = double(g.position(i)[0]);
            const double y = double(g.position(i)[1]);
            const double prof = 4.0 * y * (1.0 - y);
            const double delayed = waveform(spec, t_sec - x / c_adv);
            const double pulse = (delayed - mean_u) * std::exp(-damp * x);
            double vx = prof * (mean_u + pulse);
            double vy = 0.08 * spec.inflow_amplitude * std::sin(2.0 * M_PI * y) *
                        std::cos(2.0 * M_PI * (t_sec - x / c_adv) / spec.inflow_period) *
                        std::exp(-damp * x);
            traj.fields[(size_t(t) * n + size_t(i)) * 2 + 0] = float(vx);
            traj.fields[(size_t(t) * n + size_t(i)) * 2 + 1] = float(vy);
        }
    }
    traj.graph = std::move(g);
    return traj;
}

mesh::Trajectory simulate(const SyntheticSpec& spec) {
    switch (spec.kind) {
        case SyntheticKind::kAdvectionDiffusion: return simulate_advection_diffusion(spec);
        case SyntheticKind::kVortexStreetSurrogate: return simulate_vortex_street(spec);
        default: return simulate_pulsatile_channel(spec);
    }
}

DatasetManifest generate_dataset(const SyntheticSpec& spec, int n_train, int n_test,
                                 const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    require(fs::is_directory(out_dir), "generate_dataset: cannot create " + out_dir);

    DatasetManifest m;
    m.kind = to_string(spec.kind);
    m.n_train = n_train;
    m.n_test = n_test;
    m.dim = 2;
    switch (spec.kind) {
        case SyntheticKind::kAdvectionDiffusion:
            m.q = 1;
            m.globals_count = 3;
            m.has_inflow = false;
            m.noise_sigma = {0.01};
            break;
        case SyntheticKind::kVortexStreetSurrogate:
            m.q = 2;
            m.globals_count = 1;
            m.has_inflow = true;
            m.noise_sigma = {0.02, 0.02};
            break;
        default:
            m.q = 2;
            m.globals_count = 1;
            m.has_inflow = true;
            m.noise_sigma = {0.02, 0.02};
            break;
    }
    m.feature.next_inflow = m.has_inflow;

    for (int i = 0; i < n_train + n_test; ++i) {
        SyntheticSpec s = spec;
        s.seed = spec.seed * 1000003ULL + uint64_t(i) + 1;
        Rng rng(s.seed ^ 0x853c49e6748fea9bULL);
        if (spec.kind == SyntheticKind::kAdvectionDiffusion) {
            s.diffusivity = rng.uniform(0.004, 0.015);
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            const double mag = rng.uniform(0.3, 0.8);
            s.velocity_x = mag * std::cos(angle);
            s.velocity_y = mag * std::sin(angle);
        } else if (spec.kind == SyntheticKind::kVortexStreetSurrogate) {
            s.obstacle_x = rng.uniform(0.45, 0.75);
            s.obstacle_y = rng.uniform(0.42, 0.58);
            s.obstacle_r = rng.uniform(0.09, 0.14);
            s.inflow_amplitude = rng.uniform(0.6, 1.1);
            s.inflow_period = rng.uniform(0.5, 0.9);
            s.inflow_phase = rng.uniform(0.0, 2.0 * M_PI);
        } else {
            s.inflow_amplitude = rng.uniform(0.6, 1.2);
            s.inflow_period = rng.uniform(0.4, 0.8);
            s.inflow_phase = rng.uniform(0.0, 2.0 * M_PI);
        }
        mesh::Trajectory traj = simulate(s);
        traj.validate();
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%03d.mmtj", i);
        mesh::write_trajectory(std::string(out_dir) + "/" + name, traj);
        if (i < n_train)
            m.train_files.push_back(name);
        else
            m.test_files.push_back(name);
    }
    write_manifest(out_dir, m);
    return m;
}

void write_manifest(const std::string& dir, const DatasetManifest& m) {
    nlohmann::json j;
    j["kind"] = m.kind;
    j["n_train"] = m.n_train;
    j["n_test"] = m.n_test;
    j["train"] = m.train_files;
    j["test"] = m.test_files;
    j["dim"] = m.dim;
    j["q"] = m.q;
    j["globals_count"] = m.globals_count;
    j["has_inflow"] = m.has_inflow;
    j["noise_sigma"] = m.noise_sigma;
    j["feature"] = {{"history", m.feature.history},
                    {"positions", m.feature.positions},
                    {"next_inflow", m.feature.next_inflow}};
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    require(bool(os), "generate_dataset: cannot write manifest in " + dir);
    os << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    require(bool(is), "dataset: no manifest.json in " + dir);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        fail("dataset: malformed manifest in " + dir + ": " + e.what());
    }
    DatasetManifest m;
    m.kind = j.at("kind").get<std::string>();
    m.n_train = j.at("n_train").get<int>();
    m.n_test = j.at("n_test").get<int>();
    m.train_files = j.at("train").get<std::vector<std::string>>();
    m.test_files = j.at("test").get<std::vector<std::string>>();
    m.dim = j.at("dim").get<int>();
    m.q = j.at("q").get<int>();
    m.globals_count = j.at("globals_count").get<int>();
    m.has_inflow = j.at("has_inflow").get<bool>();
    m.noise_sigma = j.at("noise_sigma").get<std::vector<double>>();
    const auto& f = j.at("feature");
    m.feature.history = f.at("history").get<bool>();
    m.feature.positions = f.at("positions").get<bool>();
    m.feature.next_inflow = f.at("next_inflow").get<bool>();
    return m;
}

Dataset load_dataset(const std::string& dir, bool with_test) {
    Dataset d;
    d.dir = dir;
    d.manifest = read_manifest(dir);
    for (const auto& f : d.manifest.train_files)
        d.train.push_back(mesh::read_trajectory(dir + "/" + f));
    if (with_test)
        for (const auto& f : d.manifest.test_files)
            d.test.push_back(mesh::read_trajectory(dir + "/" + f));
    return d;
}

}  // namespace meshmask::datasets
