#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pdflow/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitParse = 2;
constexpr int kExitInvalidRegime = 3;
constexpr int kExitIntegration = 4;

using namespace pdflow;

std::string default_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("PDFLOW_OUT")) return env;
    return "pdflow_out";
}

int cmd_run(const std::string& config_path, const std::string& out_flag,
            double tol_scale) {
    RunConfig cfg;
    try {
        cfg = parse_run_config_file(config_path);
    } catch (const RegimeError& e) {
        std::cerr << "invalid regime: " << e.what() << '\n';
        return kExitInvalidRegime;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitParse;
    }
    cfg.tol_scale = tol_scale;
    const RegimeDescriptor regime = classify(cfg);
    if (!regime.valid()) {
        std::cerr << "invalid regime: " << regime.reason << '\n';
        return kExitInvalidRegime;
    }
    RunResult res;
    try {
        res = run_pipeline(cfg);
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        return kExitIntegration;
    }
    if (!res.trajectory.termination.completed()) {
        std::cerr << "integration failed at t=" << res.trajectory.termination.t << '\n';
        return kExitIntegration;
    }
    const std::string dir =
        !cfg.out_dir.empty() && out_flag.empty() ? cfg.out_dir : default_out_dir(out_flag);
    write_outputs(res, dir);
    std::cout << "outputs written to " << dir << '\n';
    std::cout << "all_pass: " << (res.all_pass ? "true" : "false") << '\n';
    return res.all_pass ? kExitOk : kExitFail;
}

int cmd_check(const std::string& config_path) {
    RunConfig cfg;
    try {
        cfg = parse_run_config_file(config_path);
    } catch (const RegimeError& e) {
        std::cerr << "invalid regime: " << e.what() << '\n';
        return kExitInvalidRegime;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitParse;
    }
    const RegimeDescriptor regime = classify(cfg);
    const char* names[] = {"general-gamma case I", "general-gamma case II",
                           "power r<=0", "power r>0", "invalid"};
    std::cout << "regime: " << names[static_cast<int>(regime.kind)] << '\n';
    if (!regime.valid()) {
        std::cout << "reason: " << regime.reason << '\n';
        if (cfg.beta && cfg.coupling.kind == CouplingRule::Kind::ReciprocalGamma) {
            if (const auto* pl = cfg.schedule.power_law_params();
                pl && pl->r == 1.0 && *cfg.beta * pl->alpha > 1.0)
                std::cout << "suggestion: beta <= " << format_double(1.0 / pl->alpha)
                          << " satisfies the growth condition\n";
        }
        return kExitInvalidRegime;
    }
    std::cout << "t1: " << format_double(regime.t1)
              << (regime.alpha_bound_at_t0 ? " (bound holds at t0)" : "") << '\n';
    if (regime.is_general()) {
        const GrowthCertificate g = check_growth(cfg.schedule, regime.beta);
        std::cout << "growth condition: " << (g.holds ? "holds" : "fails")
                  << " (worst margin " << format_double(g.worst_margin) << ")\n";
    }
    const EnergyParams ep = EnergyParams::from_regime(regime);
    const IdentityReport rep =
        identity_audit(ep, cfg.schedule, cfg.coupling, cfg.schedule.t0(),
                       1e4 * cfg.schedule.t0(), 256, regime.t1);
    std::cout << "eta lower-bound margin: " << format_double(rep.eta_margin_worst)
              << '\n';
    std::cout << "identity residuals: coupling "
              << format_double(rep.coupling_residual) << ", cancellation "
              << format_double(rep.cancellation_residual) << '\n';
    const PerturbationBudget budget =
        perturbation_budget(cfg.perturbation, cfg.schedule, ep);
    std::cout << "perturbation budget: " << format_double(budget.value) << " ("
              << (budget.finite ? "finite" : "infinite") << ")\n";
    return kExitOk;
}

struct SweepCell {
    Json overrides;
    std::string label;
};

// Cartesian product over {"dotted.key": [values...]}.
std::vector<SweepCell> expand_grid(const Json& sweep) {
    std::vector<SweepCell> cells{{Json::object(), ""}};
    for (auto it = sweep.begin(); it != sweep.end(); ++it) {
        if (!it.value().is_array() || it.value().empty())
            throw ContractError("sweep values must be non-empty arrays");
        std::vector<SweepCell> next;
        for (const auto& cell : cells) {
            for (const auto& v : it.value()) {
                SweepCell c = cell;
                c.overrides[it.key()] = v;
                c.label += (c.label.empty() ? "" : ";") + it.key() + "=" + v.dump();
                next.push_back(std::move(c));
            }
        }
        cells = std::move(next);
        if (cells.size() > 10000) throw ContractError("sweep grid exceeds 10^4 cells");
    }
    return cells;
}

void apply_override(Json& config, const std::string& dotted, const Json& value) {
    Json* node = &config;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot - pos);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

int cmd_sweep(const std::string& config_path, const std::string& out_flag, int jobs,
              double tol_scale) {
    Json base;
    std::vector<SweepCell> cells;
    try {
        std::ifstream in(config_path);
        if (!in) throw ContractError("cannot open config file");
        base = Json::parse(in);
        if (!base.contains("sweep") || base.at("sweep").empty())
            throw ContractError("sweep config needs a non-empty 'sweep' object");
        cells = expand_grid(base.at("sweep"));
        base.erase("sweep");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitParse;
    }

    struct Row {
        std::string label;
        std::vector<RateRow> rates;
        bool pass = false;
        std::string error;
    };
    std::vector<Row> rows(cells.size());
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= cells.size()) return;
                i = next++;
            }
            Json cj = base;
            for (auto it = cells[i].overrides.begin(); it != cells[i].overrides.end();
                 ++it)
                apply_override(cj, it.key(), it.value());
            rows[i].label = cells[i].label;
            try {
                RunConfig cfg = parse_run_config(cj);
                cfg.tol_scale = tol_scale;
                const RunResult res = run_pipeline(cfg);
                rows[i].rates = res.rates;
                rows[i].pass = res.all_pass;
            } catch (const std::exception& e) {
                rows[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::max(1, jobs);
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    const std::string dir = default_out_dir(out_flag);
    std::filesystem::create_directories(dir);
    std::ofstream os(std::filesystem::path(dir) / "sweep.csv");
    os << "cell,quantity,basis,window_lo,window_hi,fitted,theoretical,pass,error\n";
    bool all = true;
    for (const auto& row : rows) {
        if (!row.error.empty()) {
            os << '"' << row.label << "\",,,,,,,false,\"" << row.error << "\"\n";
            all = false;
            continue;
        }
        for (const auto& r : row.rates)
            os << '"' << row.label << "\"," << r.quantity << ','
               << (r.basis == Basis::LogT ? "log_t" : "log_p") << ','
               << format_double(r.window_lo) << ',' << format_double(r.window_hi) << ','
               << format_double(r.fitted) << ',' << format_double(r.theoretical) << ','
               << (r.pass ? "true" : "false") << ",\n";
        all = all && row.pass;
    }
    std::cout << rows.size() << " cells -> " << dir << "/sweep.csv\n";
    return all ? kExitOk : kExitFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"inertial primal-dual flow experiment harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    double tol_scale = 1.0;

    auto* run = app.add_subcommand("run", "integrate, audit and export one config");
    run->add_option("config", config_path, "JSON config")->required();
    auto* sweep = app.add_subcommand("sweep", "run a parameter grid");
    sweep->add_option("config", config_path, "JSON config with a 'sweep' block")
        ->required();
    auto* check = app.add_subcommand("check", "validate a config without integrating");
    check->add_option("config", config_path, "JSON config")->required();

    for (CLI::App* sub : {run, sweep, check}) {
        sub->add_option("--out", out_dir, "output directory (default $PDFLOW_OUT)");
        sub->add_option("--jobs", jobs, "parallel sweep cells");
        sub->add_option("--tol-scale", tol_scale, "scale audit slacks");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, tol_scale);
        if (sweep->parsed()) return cmd_sweep(config_path, out_dir, jobs, tol_scale);
        return cmd_check(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFail;
    }
}
