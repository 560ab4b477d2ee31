#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "driveline/driveline.hpp"

namespace fs = std::filesystem;
using namespace driveline;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string trace_csv(const SimTrace& tr) {
    std::ostringstream o;
    o.precision(10);
    for (std::size_t c = 0; c < tr.names.size(); ++c) o << (c ? "," : "") << tr.names[c] << " [" << tr.units[c] << "]";
    for (std::size_t c = 0; c < tr.names.size(); ++c)
        if (tr.pu_base[c] > 0.0) o << "," << tr.names[c] << " [pu]";
    o << "\n";
    for (std::size_t r = 0; r < tr.rows(); ++r) {
        for (std::size_t c = 0; c < tr.names.size(); ++c) o << (c ? "," : "") << tr.columns[c][r];
        for (std::size_t c = 0; c < tr.names.size(); ++c)
            if (tr.pu_base[c] > 0.0) o << "," << tr.columns[c][r] / tr.pu_base[c];
        o << "\n";
    }
    return o.str();
}

std::string metrics_text(const TraceMetrics& m) {
    std::ostringstream o;
    o.precision(10);
    o << "i_max_pu = " << m.i_max_pu << "\n"
      << "m_max = " << m.m_max << "\n"
      << "vdc_min_pu = " << m.vdc_min_pu << "\n"
      << "vdc_max_pu = " << m.vdc_max_pu << "\n"
      << "tau_m_max_abs_pu = " << m.tau_m_max_abs_pu << "\n"
      << "finite = " << (m.finite ? "true" : "false") << "\n"
      << "vdc_overshoot_pct = " << m.vdc_overshoot_pct << "\n"
      << "vdc_settling_s = " << m.vdc_settling_s << "\n"
      << "p_before_pu = " << m.p_before_pu << "\n"
      << "p_after_pu = " << m.p_after_pu << "\n"
      << "q_before_pu = " << m.q_before_pu << "\n"
      << "q_after_pu = " << m.q_after_pu << "\n"
      << "pm_before_pu = " << m.pm_before_pu << "\n"
      << "pm_after_pu = " << m.pm_after_pu << "\n"
      << "vdc_h2_rms_v = " << m.vdc_h2_rms << "\n"
      << "sync_peak = " << m.sync_peak << "\n"
      << "sync_lock_s = " << m.sync_lock_s << "\n";
    return o.str();
}

std::string trace_plot_script(const std::string& csv) {
    return "import sys\n"
           "import pandas as pd\n"
           "import matplotlib.pyplot as plt\n\n"
           "df = pd.read_csv('" + csv + "')\n"
           "t = df['t [s]']\n"
           "panels = [('i_norm [pu]', 'i_star_norm [pu]'), ('v_dc [pu]',), ('P_g [pu]', 'Q_g [pu]', 'P_star [pu]', 'Q_star [pu]'),\n"
           "          ('tau_m [pu]', 'tau_shaft [pu]', 'tau_l [pu]'), ('w1 [pu]',), ('vg_norm [pu]', 'm_norm [1]')]\n"
           "fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(8, 2.2 * len(panels)))\n"
           "for ax, cols in zip(axes, panels):\n"
           "    for c in cols:\n"
           "        ax.plot(t, df[c], label=c)\n"
           "    ax.legend(loc='upper right', fontsize=7)\n"
           "    ax.grid(True)\n"
           "axes[-1].set_xlabel('t [s]')\n"
           "fig.tight_layout()\n"
           "fig.savefig(sys.argv[1] if len(sys.argv) > 1 else 'trace.png', dpi=120)\n";
}

struct RunRequest {
    std::string scenario;
    GridKind grid = GridKind::Stiff;
    ControlKind control = ControlKind::Cascaded;
};

struct RunResult {
    RunRequest req;
    TraceMetrics metrics;
    RunManifest manifest;
    bool ok = false;
};

SimConfig config_for(const SimConfig& base, const RunRequest& r) {
    SimConfig cfg = base;
    cfg.scenario = scenario_preset(r.scenario, r.grid, r.control);
    return cfg;
}

/// Runs one scenario and writes its artifacts into `dir`. Never throws for simulation failures.
RunResult execute(const SimConfig& cfg, const fs::path& dir) {
    RunResult res;
    res.req = {cfg.scenario.name, cfg.scenario.grid, cfg.scenario.control};
    fs::create_directories(dir);
    const std::string cfg_text = serialize_config(cfg);
    write_file(dir / "config.cfg", cfg_text);

    RunManifest& man = res.manifest;
    man.config_hash = hex64(fnv1a64(cfg_text));
    man.tool_version = std::string(kVersion);
    man.scenario = cfg.scenario.name;
    man.grid = std::string(to_string(cfg.scenario.grid));
    man.control = std::string(to_string(cfg.scenario.control));
    man.outputs.push_back({"config", (dir / "config.cfg").string()});

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const SimTrace tr = run_scenario(cfg);
        res.metrics = trace_metrics(tr, cfg.scenario, cfg.effective_plant());
        for (const auto& c : limit_checks(res.metrics)) man.checks.push_back({c.name, c.pass});
        write_file(dir / "trace.csv", trace_csv(tr));
        write_file(dir / "metrics.txt", metrics_text(res.metrics));
        write_file(dir / "plot_trace.py", trace_plot_script("trace.csv"));
        man.outputs.push_back({"trace", (dir / "trace.csv").string()});
        man.outputs.push_back({"metrics", (dir / "metrics.txt").string()});
        man.outputs.push_back({"plot", (dir / "plot_trace.py").string()});
    } catch (const std::exception& e) {
        man.error = e.what();
    }
    man.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(dir / "manifest.txt", man.to_text());
    res.ok = man.all_passed();
    return res;
}

std::string run_label(const RunRequest& r) {
    return r.scenario + "_" + std::string(to_string(r.grid)) + "_" + std::string(to_string(r.control));
}

SimConfig base_config(const std::string& path) { return path.empty() ? SimConfig{} : load_config(path); }

/// --scenario replaces the config file's scenario with a preset; --grid and --control only retarget it.
int cmd_simulate(const std::string& config_path, const std::optional<std::string>& scenario,
                 const std::optional<std::string>& grid, const std::optional<std::string>& control,
                 const fs::path& out) {
    SimConfig cfg = base_config(config_path);
    const bool from_file = !config_path.empty();
    const GridKind g = grid ? parse_grid(*grid) : cfg.scenario.grid;
    const ControlKind c = control ? parse_control(*control) : cfg.scenario.control;
    if (scenario || !from_file) {
        cfg = config_for(cfg, {scenario.value_or("phase-jump"), g, c});
    } else {
        cfg.scenario.grid = g;
        cfg.scenario.control = c;
    }
    const RunResult res = execute(cfg, out);
    if (!res.manifest.error.empty()) {
        std::cerr << "error: " << res.manifest.error << "\n";
        return kRuntimeFailure;
    }
    std::cout << metrics_text(res.metrics);
    for (const auto& [name, ok] : res.manifest.checks)
        if (!ok) std::cerr << "limit check failed: " << name << "\n";
    std::cout << "wrote " << out.string() << " (" << (res.ok ? "pass" : "fail") << ")\n";
    return res.ok ? kOk : kRuntimeFailure;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& only, bool dry_run, unsigned jobs,
              const fs::path& out) {
    const SimConfig base = base_config(config_path);
    std::vector<RunRequest> plan;
    auto selected = [&](const RunRequest& r) {
        if (only.empty()) return true;
        for (const auto& f : only)
            if (f != r.scenario && f != to_string(r.grid) && f != to_string(r.control)) return false;
        return true;
    };
    for (auto name : kScenarioNames)
        for (GridKind g : {GridKind::Stiff, GridKind::Weak})
            for (ControlKind c : {ControlKind::Cascaded, ControlKind::Matching}) {
                RunRequest r{std::string(name), g, c};
                if (selected(r)) plan.push_back(r);
            }

    if (dry_run) {
        for (const auto& r : plan) std::cout << run_label(r) << "\n";
        std::cout << plan.size() << " runs planned\n";
        return kOk;
    }

    std::vector<RunResult> results(plan.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto t0 = std::chrono::steady_clock::now();
    auto worker = [&] {
        for (std::size_t k = next++; k < plan.size(); k = next++) {
            results[k] = execute(config_for(base, plan[k]), out / run_label(plan[k]));
            const std::lock_guard lock(log_mutex);
            std::cerr << (results[k].ok ? "pass " : "FAIL ") << run_label(plan[k]) << "\n";
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(jobs ? jobs : std::thread::hardware_concurrency(),
                                                       static_cast<unsigned>(plan.size())));
    std::vector<std::thread> pool;
    for (unsigned k = 0; k + 1 < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream table;
    table.precision(6);
    table << "scenario,grid,control,status,i_max_pu,m_max,vdc_min_pu,vdc_max_pu,vdc_overshoot_pct,vdc_settling_s,"
             "pm_before_pu,pm_after_pu,vdc_h2_rms_v,sync_lock_s,runtime_s,error\n";
    std::size_t failed = 0;
    for (const auto& r : results) {
        const auto& m = r.metrics;
        failed += r.ok ? 0 : 1;
        std::string err = r.manifest.error;
        std::replace(err.begin(), err.end(), ',', ';');
        table << r.req.scenario << "," << to_string(r.req.grid) << "," << to_string(r.req.control) << ","
              << (r.ok ? "pass" : "fail") << "," << m.i_max_pu << "," << m.m_max << "," << m.vdc_min_pu << ","
              << m.vdc_max_pu << "," << m.vdc_overshoot_pct << "," << m.vdc_settling_s << "," << m.pm_before_pu << ","
              << m.pm_after_pu << "," << m.vdc_h2_rms << "," << m.sync_lock_s << "," << r.manifest.runtime_s << ","
              << err << "\n";
    }
    fs::create_directories(out);
    write_file(out / "summary.csv", table.str());
    std::cout << table.str();
    std::cout << results.size() - failed << "/" << results.size() << " runs passed the limit checks in " << wall
              << " s\n";
    for (const auto& r : results)
        if (!r.ok) {
            std::cout << "failed: " << run_label(r.req);
            for (const auto& [name, ok] : r.manifest.checks)
                if (!ok) std::cout << " " << name;
            if (!r.manifest.error.empty()) std::cout << " (" << r.manifest.error << ")";
            std::cout << "\n";
        }
    return failed ? kRuntimeFailure : kOk;
}

std::string bode_csv(const std::vector<FrequencyPoint>& pts) {
    std::ostringstream o;
    o.precision(10);
    o << "freq [Hz],gain [dB],phase [deg]\n";
    for (const auto& p : pts) o << p.hz << "," << p.gain_db << "," << p.phase_deg << "\n";
    return o.str();
}

std::string bode_plot_script(const std::vector<std::string>& csvs) {
    std::string files;
    for (const auto& c : csvs) files += "'" + c + "', ";
    return "import sys\n"
           "import pandas as pd\n"
           "import matplotlib.pyplot as plt\n\n"
           "fig, (g, ph) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))\n"
           "for f in [" + files + "]:\n"
           "    df = pd.read_csv(f)\n"
           "    g.semilogx(df['freq [Hz]'], df['gain [dB]'], label=f)\n"
           "    ph.semilogx(df['freq [Hz]'], df['phase [deg]'], label=f)\n"
           "g.set_ylabel('|v_dc / i_dc| [dB Ohm]')\n"
           "ph.set_ylabel('phase [deg]')\n"
           "ph.set_xlabel('f [Hz]')\n"
           "for ax in (g, ph):\n"
           "    ax.grid(True, which='both')\n"
           "    ax.legend(fontsize=7)\n"
           "fig.tight_layout()\n"
           "fig.savefig(sys.argv[1] if len(sys.argv) > 1 else 'bode.png', dpi=120)\n";
}

int cmd_bode(const std::string& config_path, const std::string& coupling, double f_lo, double f_hi,
             std::size_t points, const fs::path& out) {
    const SimConfig cfg = base_config(config_path);
    const PlantParams& p = cfg.plant;
    fs::create_directories(out);
    const std::string cfg_text = serialize_config(cfg);
    write_file(out / "config.cfg", cfg_text);
    RunManifest man;
    man.config_hash = hex64(fnv1a64(cfg_text));
    man.tool_version = std::string(kVersion);
    man.scenario = "bode";
    man.outputs.push_back({"config", (out / "config.cfg").string()});

    const auto t0 = std::chrono::steady_clock::now();
    const auto freqs = log_frequencies(f_lo, f_hi, points);
    std::vector<std::string> csvs;
    std::ostringstream summary;
    summary.precision(8);
    int rc = kOk;
    try {
        for (bool coupled : {true, false}) {
            if ((coupled && coupling == "off") || (!coupled && coupling == "on")) continue;
            LinearizeOptions opt;
            opt.coupled = coupled;
            const LinearModel lm = linearize(p, cfg.control.gains, opt);
            const std::string tag = coupled ? "coupled" : "uncoupled";
            const std::string csv = "bode_" + tag + ".csv";
            write_file(out / csv, bode_csv(frequency_response(lm, freqs)));
            csvs.push_back(csv);
            man.outputs.push_back({tag, (out / csv).string()});
            const double c_eff = effective_capacitance(lm, f_lo);
            summary << tag << ".c_eff_F = " << c_eff << "\n";
            summary << tag << ".c_eff_over_cdc = " << c_eff / p.Cdc << "\n";
            for (const auto& z : transmission_zeros(lm))
                if (z.imag() >= 0.0) summary << tag << ".zero_hz = " << z.real() << (z.imag() ? " + j" : "")
                                             << (z.imag() ? std::to_string(z.imag()) : "") << "\n";
            if (coupled) {
                const bool ok = std::abs(c_eff / p.c_tot() - 1.0) < 0.01;
                man.checks.push_back({"c_tot_within_1pct", ok});
            }
        }
        summary << "c_tot_formula_F = " << p.c_tot() << "\n";
        summary << "lowest_tnf_hz = " << torsional_frequencies(p).front() << "\n";
        write_file(out / "bode_summary.txt", summary.str());
        write_file(out / "plot_bode.py", bode_plot_script(csvs));
        man.outputs.push_back({"summary", (out / "bode_summary.txt").string()});
        man.outputs.push_back({"plot", (out / "plot_bode.py").string()});
        std::cout << summary.str();
    } catch (const NoEquilibrium& e) {
        man.error = e.what();
        std::cerr << "error: " << e.what() << "\n";
        rc = kRuntimeFailure;
    }
    man.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_file(out / "manifest.txt", man.to_text());
    if (rc == kOk && !man.all_passed()) rc = kRuntimeFailure;
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Back-to-back drive simulator: cascaded PI versus matching control on the grid side"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    const std::vector<std::string> scenarios(kScenarioNames.begin(), kScenarioNames.end());
    std::string config_path;
    std::string out_dir = "out";

    auto* sim = app.add_subcommand("simulate", "Run one scenario and write trace, metrics and manifest");
    std::optional<std::string> scenario, grid, control;
    sim->add_option("--scenario", scenario, "Scenario preset")->check(CLI::IsMember(scenarios));
    sim->add_option("--grid", grid, "Grid strength")->check(CLI::IsMember({"stiff", "weak"}));
    sim->add_option("--control", control, "Grid-side controller")->check(CLI::IsMember({"cascaded", "matching"}));
    sim->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    sim->add_option("--out", out_dir, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "Run every scenario x grid x controller combination");
    std::vector<std::string> only;
    bool dry_run = false;
    unsigned jobs = 0;
    std::vector<std::string> filters = scenarios;
    for (const char* f : {"stiff", "weak", "cascaded", "matching"}) filters.emplace_back(f);
    sweep->add_option("--only", only, "Keep runs matching every given scenario, grid or controller name")
        ->check(CLI::IsMember(filters));
    sweep->add_flag("--dry-run", dry_run, "List the planned runs without executing them");
    sweep->add_option("--jobs", jobs, "Worker threads (0: hardware concurrency)");
    sweep->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    sweep->add_option("--out", out_dir, "Output directory");

    auto* bode = app.add_subcommand("bode", "Frequency response of the DC link seen from a DC current injection");
    std::string coupling = "both";
    double f_lo = 0.01, f_hi = 100.0;
    std::size_t points = 400;
    bode->add_option("--coupling", coupling, "Speed loop referenced to the DC link (on), to w_nom (off), or both")
        ->check(CLI::IsMember({"on", "off", "both"}));
    bode->add_option("--fmin", f_lo, "Lowest frequency [Hz]")->check(CLI::PositiveNumber);
    bode->add_option("--fmax", f_hi, "Highest frequency [Hz]")->check(CLI::PositiveNumber);
    bode->add_option("--points", points, "Number of frequencies")->check(CLI::Range(2, 100000));
    bode->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    bode->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsageError;
    }

    try {
        if (*sim) return cmd_simulate(config_path, scenario, grid, control, out_dir);
        if (*sweep) return cmd_sweep(config_path, only, dry_run, jobs, out_dir);
        if (*bode) {
            if (!(f_hi > f_lo)) throw CLI::ValidationError("--fmax", "must exceed --fmin");
            return cmd_bode(config_path, coupling, f_lo, f_hi, points, out_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kUsageError;
}
