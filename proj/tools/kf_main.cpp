// kf: per-application kernel specialization toolkit.
//
// Pipeline stages talk only through documented files, so any stage can be
// replaced by a foreign implementation:
//   kf profile    traces            -> profile.json   (block/symbol/page)
//   kf expand     profile + syscalls -> profile.json  (syscall granularity)
//   kf specialize profile           -> masked text + sidecar
//   kf simulate   scenario          -> event log
//   kf report     masked texts      -> attack-surface report
//
// Exit codes: 0 success, 1 domain error, 2 usage or input-file error.

#include "kf/error.hpp"
#include "kf/image.hpp"
#include "kf/log.hpp"
#include "kf/metrics.hpp"
#include "kf/profile.hpp"
#include "kf/scenario.hpp"
#include "kf/sim.hpp"
#include "kf/specialize.hpp"
#include "kf/syscall_analysis.hpp"
#include "kf/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>

using namespace kf;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "kf 0.1.0";

// Timestamps never appear in output bodies; they live here so outputs stay
// byte-reproducible.
void write_meta_sidecar(const fs::path& output) {
    nlohmann::json meta;
    meta["tool"] = kToolVersion;
    meta["created_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
            .count();
    write_text_file(output.string() + ".meta.json", meta.dump(2) + "\n");
}

void emit(const std::string& doc, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << doc;
        return;
    }
    write_text_file(out_path, doc);
    write_meta_sidecar(out_path);
}

struct ProfileArgs {
    std::string image_dir;
    std::vector<std::string> traces;
    std::string granularity = "block";
    size_t window = 3;
    size_t max_runs = 15;
    std::string allow_tags;
    std::string app = "app";
    std::string output;
};

int cmd_profile(const ProfileArgs& args) {
    KernelImage image = KernelImage::load(args.image_dir);

    std::set<std::string> tags;
    for (auto& t : split(args.allow_tags, ','))
        if (!t.empty()) tags.insert(t);

    std::optional<KernelProfile> profile;
    std::vector<size_t> history;
    size_t runs = 0;
    for (const auto& path : args.traces) {
        if (runs >= args.max_runs) {
            log_info("run cap of " + std::to_string(args.max_runs) + " reached, ignoring " + path);
            break;
        }
        TraceRun run = segment(parse_trace_file(path));
        if (run.segmentation_degraded)
            log_warn(run.run_id + ": start/end markers missing, using the whole run");
        if (!tags.empty()) run = filter_noise(run, tags);

        AccumulateResult res = accumulate(profile ? &*profile : nullptr, run, image, args.app);
        uint64_t total = res.resolved_pcs + res.unresolved_pcs;
        if (res.unresolved_pcs > 0 && res.unresolved_pcs * 100 >= total)
            log_warn(run.run_id + ": " + std::to_string(res.unresolved_pcs) + " of " +
                     std::to_string(total) + " pcs resolve to no block");
        profile = std::move(res.profile);
        history.push_back(profile->ranges.size());
        runs++;
        if (is_stable(history, args.window)) break;
    }
    if (!profile) {
        profile.emplace();
        profile->app_name = args.app;
    }
    profile->stable = is_stable(history, args.window);

    KernelProfile out = *profile;
    auto target = granularity_from_name(args.granularity);
    if (target && *target != Granularity::Block) out = coarsen(*profile, *target, image);

    save_profile(out, args.output);
    write_meta_sidecar(args.output);

    std::cout << "profile: app=" << out.app_name << " granularity=" << granularity_name(out.granularity)
              << " runs=" << out.runs_consumed << (out.stable ? " (stable)" : " (not stable)")
              << " ranges=" << out.ranges.size() << " bytes=" << out.covered_bytes() << "\n";
    return 0;
}

int cmd_expand(const std::string& image_dir, const std::string& profile_path,
               const std::string& syscalls_path, const std::string& output,
               const std::string& closure_out) {
    KernelImage image = KernelImage::load(image_dir);
    KernelProfile profile = load_profile(profile_path);
    SyscallList list = load_syscall_list(syscalls_path, profile.app_name);

    ReachabilitySet closure_set = closure(image, list);
    KernelProfile expanded = expand_profile(profile, closure_set, image);
    save_profile(expanded, output);
    write_meta_sidecar(output);
    if (!closure_out.empty()) {
        write_text_file(closure_out, reachability_to_json(closure_set));
        write_meta_sidecar(closure_out);
    }

    auto unlisted = syscalls_not_listed(image, list);
    std::cout << "expanded: roots=" << closure_set.roots.size()
              << " reached=" << closure_set.reached.size() << " ranges=" << expanded.ranges.size()
              << " bytes=" << expanded.covered_bytes() << "\n";
    // strace-style lists are best effort; show what the list did not claim.
    std::cout << "syscalls not in list (" << unlisted.size() << "):";
    for (const auto& s : unlisted) std::cout << " " << s;
    std::cout << "\n";
    return 0;
}

int cmd_specialize(const std::string& image_dir, const std::string& profile_path,
                   const std::string& output) {
    KernelImage image = KernelImage::load(image_dir);
    KernelProfile profile = load_profile(profile_path);
    SpecializedKernel spec = specialize(image, profile);
    save_specialized(spec, output);
    write_meta_sidecar(output);

    ReductionStats st = reduction_stats(spec);
    std::cout << "specialized: app=" << spec.app_name << " masked=" << st.masked_bytes << "/"
              << st.total_bytes << " bytes (" << st.text_reduced_pct << "% text reduced)\n";
    return 0;
}

struct SimulateArgs {
    std::string image_dir;
    std::string scenario_path;
    std::vector<std::string> profile_specs; // app=path
    std::string output;
    uint64_t ram_mb = 8192;
    uint64_t per_kernel_mb = 8;
    uint64_t baseline_mb = 2192;
    uint64_t launch_cost = 3;
    std::string fault_policy = "kill";
};

int cmd_simulate(const SimulateArgs& args) {
    auto image = std::make_shared<KernelImage>(KernelImage::load(args.image_dir));

    sim::SimConfig config;
    config.ram_mb = args.ram_mb;
    config.per_kernel_mb = args.per_kernel_mb;
    config.baseline_reserved_mb = args.baseline_mb;
    config.launch_cost_steps = args.launch_cost;
    config.fault_policy =
        args.fault_policy == "report" ? sim::FaultPolicy::ReportOnly : sim::FaultPolicy::Kill;
    config.irq_map = sim::load_irq_map(args.image_dir, *image);

    std::map<std::string, KernelProfile> profiles;
    for (const auto& spec : args.profile_specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0)
            raise(Errc::MalformedScenario, "--profiles wants app=profile.json, got '" + spec + "'");
        profiles[spec.substr(0, eq)] = load_profile(spec.substr(eq + 1));
    }

    sim::Simulator simulator(image, config);
    std::ifstream script(args.scenario_path);
    if (!script) raise(Errc::IoError, "cannot open " + args.scenario_path);
    sim::run_scenario(simulator, script, profiles);

    std::ostringstream log_out;
    sim::write_event_log(simulator, log_out);
    emit(log_out.str(), args.output);

    std::cerr << "simulated: events=" << simulator.event_log().size()
              << " steps=" << simulator.clock() << " regions=" << simulator.region_count() << "\n";
    return 0;
}

struct ReportArgs {
    std::string image_dir;
    std::vector<std::string> spec_bins;
    std::string cve_db;
    std::string format = "text";
    size_t max_gadget_len = 20;
    std::string output;
};

int cmd_report(const ReportArgs& args) {
    KernelImage image = KernelImage::load(args.image_dir);
    auto format = report_format_from_name(args.format);
    if (!format) raise(Errc::UnsupportedFormat, "format '" + args.format + "'");

    std::vector<CveRecord> records;
    if (!args.cve_db.empty()) records = load_cve_db(args.cve_db);

    uint64_t vanilla_gadgets = count_rop_gadgets(image.text(), args.max_gadget_len);

    std::vector<SpecEntry> entries;
    for (const auto& bin : args.spec_bins) {
        std::vector<uint8_t> text = read_binary_file(bin);

        SpecEntry entry;
        entry.app = fs::path(bin).stem().string();
        fs::path sidecar = bin + ".json";
        if (fs::exists(sidecar)) {
            auto doc = nlohmann::json::parse(read_text_file(sidecar), nullptr, false);
            if (!doc.is_discarded() && doc.contains("app")) entry.app = doc["app"].get<std::string>();
        }

        entry.stats = stats_from_bytes(image, text);
        if (!records.empty()) {
            entry.cve = cve_report(records, image, text);
            entry.cve_records = records;
        }
        entry.gadgets.vanilla = vanilla_gadgets;
        entry.gadgets.specialized = count_rop_gadgets(text, args.max_gadget_len);
        entry.gadgets.reduction_pct = gadget_reduction(image.text(), text, args.max_gadget_len);
        entries.push_back(std::move(entry));
    }

    emit(emit_report(entries, *format), args.output);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"per-application kernel specialization toolkit"};
    app.require_subcommand(1);
    // flags may also come from a TOML-style file, keyed by [subcommand] section
    app.set_config("--config", "", "read options from a config file");

    ProfileArgs pa;
    auto* profile = app.add_subcommand("profile", "build a kernel profile from execution traces");
    profile->add_option("image_dir", pa.image_dir, "kernel image bundle directory")->required();
    profile->add_option("traces", pa.traces, "trace files, one run each")
        ->required()
        ->check(CLI::ExistingFile);
    profile->add_option("--granularity", pa.granularity, "block|symbol|page")
        ->check(CLI::IsMember({"block", "symbol", "page"}));
    profile->add_option("--window", pa.window, "zero-growth runs required for stability")
        ->check(CLI::PositiveNumber);
    profile->add_option("--max-runs", pa.max_runs, "hard cap on consumed runs")
        ->check(CLI::PositiveNumber);
    profile->add_option("--allow-tags", pa.allow_tags,
                        "comma-separated tag allowlist; use *untagged* to keep untagged events");
    profile->add_option("--app", pa.app, "application name recorded in the profile");
    profile->add_option("-o,--output", pa.output, "profile JSON output")->required();

    std::string ex_image, ex_profile, ex_syscalls, ex_out, ex_closure;
    auto* expand = app.add_subcommand("expand", "widen a symbol profile with the syscall closure");
    expand->add_option("image_dir", ex_image)->required();
    expand->add_option("profile", ex_profile, "symbol-granularity profile JSON")
        ->required()
        ->check(CLI::ExistingFile);
    expand->add_option("syscalls", ex_syscalls, "syscall list, one name per line")
        ->required()
        ->check(CLI::ExistingFile);
    expand->add_option("-o,--output", ex_out)->required();
    expand->add_option("--closure-out", ex_closure, "also write the reachability set as JSON");

    std::string sp_image, sp_profile, sp_out;
    auto* specialize_cmd = app.add_subcommand("specialize", "emit the masked kernel text");
    specialize_cmd->add_option("image_dir", sp_image)->required();
    specialize_cmd->add_option("profile", sp_profile)->required()->check(CLI::ExistingFile);
    specialize_cmd->add_option("-o,--output", sp_out, "masked text output (.bin)")->required();

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "run a scripted orchestration scenario");
    simulate->add_option("image_dir", sa.image_dir)->required();
    simulate->add_option("scenario", sa.scenario_path, "scenario JSON lines")
        ->required()
        ->check(CLI::ExistingFile);
    simulate->add_option("--profiles", sa.profile_specs, "app=profile.json (repeatable)");
    simulate->add_option("-o,--output", sa.output, "event log output (JSON lines), default stdout");
    simulate->add_option("--ram-mb", sa.ram_mb);
    simulate->add_option("--per-kernel-mb", sa.per_kernel_mb);
    simulate->add_option("--baseline-mb", sa.baseline_mb, "memory reserved before kernel copies");
    simulate->add_option("--launch-cost", sa.launch_cost, "clock steps charged per execve");
    simulate->add_option("--fault-policy", sa.fault_policy, "kill|report")
        ->check(CLI::IsMember({"kill", "report"}));

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "attack-surface report for specialized kernels");
    report->add_option("image_dir", ra.image_dir)->required();
    report->add_option("specs", ra.spec_bins, "specialized .bin files")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--cve-db", ra.cve_db, "CVE database JSON")->check(CLI::ExistingFile);
    report->add_option("--format", ra.format, "json|csv|text");
    report->add_option("--max-gadget-len", ra.max_gadget_len, "longest gadget considered, bytes")
        ->check(CLI::PositiveNumber);
    report->add_option("-o,--output", ra.output, "report output, default stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (profile->parsed()) return cmd_profile(pa);
        if (expand->parsed()) return cmd_expand(ex_image, ex_profile, ex_syscalls, ex_out, ex_closure);
        if (specialize_cmd->parsed()) return cmd_specialize(sp_image, sp_profile, sp_out);
        if (simulate->parsed()) return cmd_simulate(sa);
        if (report->parsed()) return cmd_report(ra);
    } catch (const Error& e) {
        std::cerr << "kf: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "kf: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
