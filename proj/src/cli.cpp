#include "tiered/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tiered/config.hpp"
#include "tiered/device_models.hpp"
#include "tiered/errors.hpp"
#include "tiered/queue_analyzer.hpp"
#include "tiered/sim_engine.hpp"
#include "tiered/workload.hpp"

#ifndef TIERED_VERSION
#define TIERED_VERSION "0.0.0"
#endif

namespace tiered {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::string format = "table";
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

class Manifest {
public:
    Manifest(std::string command, int argc, const char* const* argv) : started_(utc_now()) {
        j_["tool"] = "tiersim";
        j_["version"] = TIERED_VERSION;
        j_["command"] = std::move(command);
        j_["argv"] = json::array();
        for (int i = 0; i < argc; ++i) j_["argv"].push_back(argv[i]);
        j_["outputs"] = json::array();
    }

    void set(const std::string& key, json value) { j_[key] = std::move(value); }

    void output(const fs::path& path, const std::string& content) {
        write_atomic(path, content);
        j_["outputs"].push_back(path.string());
    }

    fs::path write(const fs::path& dir) {
        j_["started_at"] = started_;
        j_["finished_at"] = utc_now();
        const fs::path path = dir / "manifest.json";
        write_atomic(path, j_.dump(2) + "\n");
        return path;
    }

private:
    std::string started_;
    json j_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void check_format(const std::string& format) {
    if (format != "json" && format != "csv" && format != "table")
        throw ConfigError("--format", "expected json, csv or table, got '" + format + "'");
}

void print_metrics_table(std::ostream& out, const SimMetrics& m) {
    out << std::left << std::setw(10) << "process" << std::right << std::setw(10) << "requests" << std::setw(10)
        << "hits" << std::setw(10) << "misses" << std::setw(11) << "miss_rate" << std::setw(14) << "mean_resp_s"
        << std::setw(12) << "queue_len" << "\n";
    auto row = [&](const std::string& name, const ProcessMetrics& p) {
        out << std::left << std::setw(10) << name << std::right << std::setw(10) << p.requests << std::setw(10)
            << p.hits << std::setw(10) << p.misses << std::setw(11) << std::setprecision(4) << p.miss_rate()
            << std::setw(14) << std::setprecision(6) << p.mean_response << std::setw(12) << std::setprecision(4)
            << p.mean_miss_queue_length << "\n";
    };
    for (std::size_t i = 0; i < m.processes.size(); ++i) row(std::to_string(i), m.processes[i]);
    row("all", m.aggregate);
    out << "throughput=" << m.throughput << " req/s";
    if (m.unbounded_queue_growth) out << "  WARNING: unbounded queue growth";
    out << "\n";
}

json sweep_json(const std::vector<SweepPoint>& points) {
    json rows = json::array();
    for (const auto& p : points) rows.push_back({{"n_lines", p.n_lines}, {"misses", p.misses}, {"miss_rate", p.miss_rate}});
    return {{"schema_version", 1}, {"sweep", rows}};
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << "n_lines,misses,miss_rate\n";
    os << std::setprecision(17);
    for (const auto& p : points) os << p.n_lines << "," << p.misses << "," << p.miss_rate << "\n";
    return os.str();
}

int cmd_simulate(const GlobalOptions& g, const std::vector<std::string>& overrides, int argc,
                 const char* const* argv, std::ostream& out) {
    RunConfig rc = g.config_path.empty() ? parse_run_config("version: 1", overrides)
                                         : load_run_config(g.config_path, overrides);
    if (g.seed) rc.sim.seed = *g.seed;
    const fs::path dir = g.out_dir;
    Manifest manifest("simulate", argc, argv);
    const json config_json = to_json(rc);
    manifest.set("seed", rc.sim.seed);
    manifest.set("config", config_json);
    manifest.output(dir / "config.resolved.json", dump(config_json));

    if (!rc.sweep_sizes.empty()) {
        const auto points = sweep_cache_size(rc.sim, rc.sweep_sizes);
        manifest.output(dir / "sweep.json", dump(sweep_json(points)));
        manifest.output(dir / "sweep.csv", sweep_csv(points));
        if (g.format == "json") {
            out << dump(sweep_json(points));
        } else if (g.format == "csv") {
            out << sweep_csv(points);
        } else {
            for (const auto& p : points) out << "n_lines=" << p.n_lines << " misses=" << p.misses << " miss_rate=" << p.miss_rate << "\n";
        }
        manifest.write(dir);
        return kExitOk;
    }

    const SimMetrics metrics = run(rc.sim);
    json metrics_json = to_json(metrics);
    if (rc.compare_analytic)
        metrics_json["analytic_comparison"] = to_json(compare_to_analytic(metrics, queue_params_for(rc.sim, metrics)));
    std::ostringstream csv;
    write_metrics_csv(csv, metrics);
    manifest.output(dir / "metrics.json", dump(metrics_json));
    manifest.output(dir / "metrics.csv", csv.str());
    if (rc.write_timeseries) {
        std::ostringstream ts;
        write_timeseries_csv(ts, metrics);
        manifest.output(dir / "timeseries.csv", ts.str());
    }
    if (g.format == "json") {
        out << dump(metrics_json);
    } else if (g.format == "csv") {
        out << csv.str();
    } else {
        print_metrics_table(out, metrics);
    }
    manifest.write(dir);
    return kExitOk;
}

struct AnalyzeOptions {
    bool example = false;
    double lambda = 0.0, mu1 = 0.0, mu2 = 0.0, p12 = 0.0;
    std::optional<double> mu1_read, mu1_write;
    std::uint32_t k = 1;
    std::size_t processes = 0;
    double reads = 0, writes = 0, misses = 0;
    bool write_files = false;
};

int cmd_analyze(const GlobalOptions& g, const AnalyzeOptions& a, int argc, const char* const* argv,
                std::ostream& out) {
    json report_json;
    if (a.example) {
        const WorkedExample ex = example_walkthrough();
        report_json = to_json(ex);
        if (g.format == "table") print_table(out, ex);
    } else {
        QueueNetworkParams p;
        p.arrival_rate = a.lambda;
        p.hit_service_rate = a.mu1;
        p.hit_read_rate = a.mu1_read;
        p.hit_write_rate = a.mu1_write;
        p.miss_service_rate = a.mu2;
        p.miss_rate = a.p12;
        p.servers = a.k;
        for (std::size_t i = 0; i < a.processes; ++i)
            p.processes.push_back({a.reads, a.writes, a.misses > 0 ? a.misses : a.p12 * (a.reads + a.writes)});
        const QueueNetworkReport report = analyze_separate_queues(p);
        report_json = to_json(report);
        if (g.format == "table") print_table(out, report);
    }
    if (g.format == "json") out << dump(report_json);
    if (g.format == "csv") {
        out << "quantity,value\n" << std::setprecision(17);
        for (const auto& [key, value] : report_json.items())
            if (value.is_number()) out << key << "," << value.get<double>() << "\n";
    }
    if (a.write_files) {
        Manifest manifest("analyze", argc, argv);
        manifest.output(fs::path(g.out_dir) / "analysis.json", dump(report_json));
        manifest.write(g.out_dir);
    }
    return kExitOk;
}

struct FitOptions {
    std::string training;
    std::string device;
    std::string terms;
    std::string paper_device;
    std::string out_path;
};

void print_model_table(std::ostream& out, const DeviceModel& model) {
    const auto names = model.term_set.names();
    out << to_string(model.device) << " (" << (model.provenance == Provenance::Fitted ? "fitted" : "published") << ")\n";
    out << std::left << std::setw(16) << "term" << std::right << std::setw(16) << "estimate" << std::setw(16)
        << "std_error" << std::setw(12) << "t_value" << "\n";
    for (std::size_t i = 0; i < model.coefficients.size(); ++i) {
        out << std::left << std::setw(16) << names[i] << std::right << std::setw(16) << std::setprecision(9)
            << model.coefficients[i];
        if (i < model.std_errors.size()) out << std::setw(16) << model.std_errors[i];
        if (i < model.t_values.size()) out << std::setw(12) << std::setprecision(5) << model.t_values[i];
        out << "\n";
    }
    if (model.fit)
        out << "R^2=" << std::setprecision(9) << model.fit->r_squared
            << " residual_se=" << model.fit->residual_standard_error << " n=" << model.fit->n_samples << "\n";
}

int cmd_fit(const GlobalOptions& g, const FitOptions& f, int argc, const char* const* argv, std::ostream& out) {
    DeviceModel model;
    if (!f.paper_device.empty()) {
        if (!f.training.empty()) throw ConfigError("--paper-coefficients", "cannot be combined with --training");
        model = load_paper_model(device_from_string(f.paper_device));
    } else {
        if (f.training.empty()) throw ConfigError("--training", "a training CSV is required");
        if (f.device.empty()) throw ConfigError("--device", "a device is required");
        const Device device = device_from_string(f.device);
        const ModelTermSet terms = !f.terms.empty() ? parse_formula(f.terms)
                                   : family_of(device) == DeviceFamily::Nvme ? nvme_term_set()
                                                                            : hdd_term_set();
        const auto samples = load_training(f.training);
        model = fit(device, terms, samples);
    }
    const json j = to_json(model);
    if (g.format == "json") {
        out << dump(j);
    } else if (g.format == "csv") {
        out << "term,estimate,std_error,t_value\n" << std::setprecision(17);
        const auto names = model.term_set.names();
        for (std::size_t i = 0; i < model.coefficients.size(); ++i) {
            out << names[i] << "," << model.coefficients[i] << ",";
            if (i < model.std_errors.size()) out << model.std_errors[i];
            out << ",";
            if (i < model.t_values.size()) out << model.t_values[i];
            out << "\n";
        }
    } else {
        print_model_table(out, model);
    }
    const fs::path path = f.out_path.empty() ? fs::path(g.out_dir) / ("model-" + std::string(to_string(model.device)) + ".json")
                                             : fs::path(f.out_path);
    Manifest manifest("fit", argc, argv);
    manifest.output(path, dump(j));
    manifest.write(path.has_parent_path() ? path.parent_path() : fs::path("."));
    return kExitOk;
}

struct TraceOptions {
    std::string model;
    std::optional<std::size_t> n, pages, cap, intro_interval;
    std::optional<double> rate, zipf, lifetime, read_fraction;
    std::optional<std::uint64_t> page_size, request_size;
    std::string out_path;
};

int cmd_gen_trace(const GlobalOptions& g, const TraceOptions& t, int argc, const char* const* argv,
                  std::ostream& out) {
    TrafficSpec spec = g.config_path.empty() ? TrafficSpec{} : load_run_config(g.config_path).sim.traffic;
    if (!t.model.empty()) spec.model = traffic_model_from_string(t.model);
    if (spec.model == TrafficModel::Trace) throw ConfigError("--model", "trace replays a file; nothing to generate");
    if (spec.model != TrafficModel::Irm && (t.zipf || t.cap))
        throw ConfigError("--model", "--zipf and --cap apply to the irm model only");
    if (spec.model != TrafficModel::Poisson && (t.lifetime || t.intro_interval))
        throw ConfigError("--model", "--lifetime and --intro-interval apply to the poisson model only");
    if (t.n) spec.n_requests = *t.n;
    if (t.pages) spec.n_pages = *t.pages;
    if (t.rate) spec.arrival_rate = *t.rate;
    if (t.zipf) spec.zipf_exponent = *t.zipf;
    if (t.cap) spec.popularity_cap = *t.cap;
    if (t.lifetime) spec.mean_lifetime = *t.lifetime;
    if (t.intro_interval) spec.page_intro_interval = *t.intro_interval;
    if (t.read_fraction) spec.read_fraction = *t.read_fraction;
    if (t.page_size) spec.page_size = *t.page_size;
    if (t.request_size) spec.request_size = *t.request_size;
    if (g.seed) spec.rng_seed = *g.seed;

    const auto requests = generate(spec);
    std::ostringstream csv;
    write_trace(csv, requests);
    const fs::path path = t.out_path.empty() ? fs::path(g.out_dir) / "trace.csv" : fs::path(t.out_path);
    Manifest manifest("gen-trace", argc, argv);
    manifest.set("seed", spec.rng_seed);
    manifest.output(path, csv.str());
    manifest.write(path.has_parent_path() ? path.parent_path() : fs::path("."));
    if (g.format != "csv") out << "wrote " << requests.size() << " requests to " << path.string() << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tiered storage simulator and analytic toolkit", "tiersim"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", TIERED_VERSION);

    GlobalOptions g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config_path, "YAML configuration file");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed, overrides the configuration");
    app.add_option("--out-dir", g.out_dir, "Directory for outputs and the run manifest");
    app.add_option("--format", g.format, "Report format: json, csv or table");

    std::vector<std::string> overrides;
    auto* sim = app.add_subcommand("simulate", "Run the discrete-event simulation (or a cache-size sweep)");
    sim->add_option("--set", overrides, "Override a configuration key, e.g. cache.n_lines=128")->allow_extra_args(false);

    AnalyzeOptions a;
    auto* ana = app.add_subcommand("analyze", "Evaluate the two-queue analytic model");
    ana->add_flag("--paper-example", a.example, "Print the published worked example");
    ana->add_option("--lambda", a.lambda, "Arrival rate per process (requests/s)");
    ana->add_option("--mu1", a.mu1, "Tier-1 service rate (requests/s)");
    ana->add_option("--mu1-read", a.mu1_read, "Tier-1 read service rate");
    ana->add_option("--mu1-write", a.mu1_write, "Tier-1 write service rate");
    ana->add_option("--mu2", a.mu2, "Tier-2 service rate (requests/s)");
    ana->add_option("--p12", a.p12, "Miss rate");
    ana->add_option("--k", a.k, "Tier-1 servers");
    ana->add_option("--processes", a.processes, "Number of processes for the completion-time bounds");
    ana->add_option("--reads", a.reads, "Reads per process");
    ana->add_option("--writes", a.writes, "Writes per process");
    ana->add_option("--misses", a.misses, "Misses per process (default p12 * requests)");

    FitOptions f;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a device performance model by least squares");
    fit_cmd->add_option("--training", f.training, "Training CSV (x1..x5,y_seconds)");
    fit_cmd->add_option("--device", f.device, "nvme-read, nvme-write, hdd-read or hdd-write");
    fit_cmd->add_option("--terms", f.terms, "Formula such as 'X1*X3*X4 + X5*X4*X3'");
    fit_cmd->add_option("--paper-coefficients", f.paper_device, "Dump the published model for a device");
    fit_cmd->add_option("--out", f.out_path, "Model JSON path (default <out-dir>/model-<device>.json)");

    TraceOptions t;
    auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic request trace");
    gen->add_option("--model", t.model, "poisson or irm");
    gen->add_option("--n", t.n, "Number of requests");
    gen->add_option("--pages", t.pages, "Number of pages");
    gen->add_option("--rate", t.rate, "Arrival rate (requests/s)");
    gen->add_option("--zipf", t.zipf, "Zipf exponent (irm)");
    gen->add_option("--cap", t.cap, "Requests per page before it expires (irm)");
    gen->add_option("--lifetime", t.lifetime, "Mean page lifetime in seconds (poisson)");
    gen->add_option("--intro-interval", t.intro_interval, "Requests between new pages (poisson)");
    gen->add_option("--read-fraction", t.read_fraction, "Fraction of reads");
    gen->add_option("--page-size", t.page_size, "Page size in bytes");
    gen->add_option("--request-size", t.request_size, "Request size in bytes");
    gen->add_option("--out", t.out_path, "Trace path (default <out-dir>/trace.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }
    if (seed_opt->count() > 0) g.seed = seed;

    try {
        check_format(g.format);
        if (sim->parsed()) return cmd_simulate(g, overrides, argc, argv, out);
        if (ana->parsed()) {
            a.write_files = app.get_option("--out-dir")->count() > 0;
            return cmd_analyze(g, a, argc, argv, out);
        }
        if (fit_cmd->parsed()) return cmd_fit(g, f, argc, argv, out);
        if (gen->parsed()) return cmd_gen_trace(g, t, argc, argv, out);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const InvariantError& e) {
        err << "invariant violated: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace tiered
