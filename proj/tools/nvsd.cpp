// nvsd: command-line driver for the memory-hierarchy simulator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nvsd/nvsd.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string trace_path;
    std::string trace_format;
    std::string out;
    std::string format;
    std::optional<std::uint64_t> seed;
    bool print_config = false;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "experiment configuration (JSON)");
    cmd->add_option("--trace", o.trace_path, "replay this trace file instead of the configured source");
    cmd->add_option("--trace-format", o.trace_format, "format of --trace")->check(CLI::IsMember({"text", "binary"}));
    cmd->add_option("--out", o.out, "output file (default: standard output)");
    cmd->add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "json", "human"}));
    cmd->add_option("--seed", o.seed, "random seed for generated traces");
    cmd->add_flag("--print-config", o.print_config, "print the fully resolved configuration and exit");
}

nvsd::ExperimentConfig resolve(const Options& o) {
    nvsd::ExperimentConfig c = o.config_path.empty() ? nvsd::ExperimentConfig{} : nvsd::load_config(o.config_path);
    if (!o.trace_path.empty()) {
        nvsd::TraceFileSource f{o.trace_path, nvsd::TraceFormat::Text};
        const bool bin = o.trace_format.empty() ? o.trace_path.ends_with(".bin") : o.trace_format == "binary";
        if (bin) f.format = nvsd::TraceFormat::Binary;
        c.trace = f;
    }
    if (!o.out.empty()) c.output_path = o.out;
    if (!o.format.empty()) c.output_format = *nvsd::report_format_from(o.format);
    if (o.seed) c = nvsd::with_seed(c, *o.seed);
    return c;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw nvsd::IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw nvsd::IoError("write to '" + path + "' failed");
}

// The summary goes to stdout unless the report itself does.
std::ostream& summary_stream(const nvsd::ExperimentConfig& c) {
    return c.output_path.empty() ? std::cerr : std::cout;
}

int cmd_run(const nvsd::ExperimentConfig& c) {
    const auto r = nvsd::run_single(c);
    const auto text = nvsd::emit_report(r, c.output_format);
    summary_stream(c) << nvsd::summary_line(r) << '\n';
    write_output(c.output_path, text);
    return 0;
}

int cmd_compare(const nvsd::ExperimentConfig& c) {
    const auto p = nvsd::run_paired(c);
    const auto text = nvsd::emit_paired(p, c.output_format);
    auto& os = summary_stream(c);
    os << nvsd::summary_line(p.baseline) << '\n' << nvsd::summary_line(p.with_prefetch) << '\n';
    write_output(c.output_path, text);
    return 0;
}

int cmd_sweep(const nvsd::ExperimentConfig& c) {
    const auto s = nvsd::run_sweep(c);
    write_output(c.output_path, nvsd::emit_sweep_csv(s));
    summary_stream(c) << "sweep: " << s.rows.size() << " runs\n";
    return 0;
}

int cmd_gen(const nvsd::ExperimentConfig& c, bool binary) {
    const auto* gen = std::get_if<nvsd::TraceGenSpec>(&c.trace);
    if (!gen) throw nvsd::ValidationError("gen needs a 'trace.generate' section, not a trace file");
    if (c.output_path.empty()) throw nvsd::ValidationError("gen needs --out");
    const auto trace = nvsd::generate(*gen);
    nvsd::write_trace_file(c.output_path, trace, binary ? nvsd::TraceFormat::Binary : nvsd::TraceFormat::Text);
    std::cout << "wrote " << trace.size() << " records to " << c.output_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NVRAM/SRAM/DRAM hybrid memory hierarchy simulator"};
    app.require_subcommand(1);

    Options run_o, cmp_o, sweep_o, gen_o;
    bool gen_binary = false;
    auto* run = app.add_subcommand("run", "simulate one configuration");
    add_common(run, run_o);
    auto* cmp = app.add_subcommand("compare", "simulate a no-prefetch baseline and the configured system");
    add_common(cmp, cmp_o);
    auto* sweep = app.add_subcommand("sweep", "simulate every combination of the configured sweep lists");
    add_common(sweep, sweep_o);
    auto* gen = app.add_subcommand("gen", "write the configured synthetic trace to --out");
    add_common(gen, gen_o);
    gen->add_flag("--binary", gen_binary, "write the 25-byte binary record format");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const Options& o = run->parsed() ? run_o : cmp->parsed() ? cmp_o : sweep->parsed() ? sweep_o : gen_o;
        auto c = resolve(o);
        if (cmp->parsed()) c.mode = nvsd::RunMode::Paired;
        if (sweep->parsed()) c.mode = nvsd::RunMode::Sweep;
        if (o.print_config) {
            std::cout << nvsd::config_to_json(c).dump(2) << '\n';
            return 0;
        }
        if (gen->parsed()) return cmd_gen(c, gen_binary);
        switch (c.mode) {
            case nvsd::RunMode::Single: return cmd_run(c);
            case nvsd::RunMode::Paired: return cmd_compare(c);
            case nvsd::RunMode::Sweep: return cmd_sweep(c);
        }
        return 3;
    } catch (const nvsd::Error& e) {
        std::cerr << "nvsd: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "nvsd: internal error: " << e.what() << '\n';
        return 3;
    }
}
