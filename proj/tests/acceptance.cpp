// Acceptance suite: every release gate runs here, one pass/fail line per
// criterion, with the tolerance pinned in the check itself.

#include "kf/error.hpp"
#include "kf/image.hpp"
#include "kf/metrics.hpp"
#include "kf/profile.hpp"
#include "kf/sha256.hpp"
#include "kf/sim.hpp"
#include "kf/specialize.hpp"
#include "kf/syscall_analysis.hpp"
#include "kf/util.hpp"

#include "testutil.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace kf;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

std::shared_ptr<const KernelImage> toy_image() {
    static auto img = std::make_shared<KernelImage>(KernelImage::load(kftest::toy_bundle_dir()));
    return img;
}

KernelProfile symbols_profile(const KernelImage& img, std::initializer_list<const char*> names,
                              const std::string& app) {
    KernelProfile p;
    p.app_name = app;
    p.granularity = Granularity::Symbol;
    for (const char* n : names) p.ranges.insert(img.find_symbol(n)->extent());
    return p;
}

// --- 1. CVE classification ground truth -------------------------------------

void criterion_cve_ground_truth() {
    const KernelImage& img = *toy_image();
    KernelProfile profile = kftest::build_httpd_block_profile(img);
    SpecializedKernel spec = specialize(img, profile);
    auto db = load_cve_db(kftest::fixtures_dir() / "cves.json");
    expect(db.size() == 23, "CVE database must hold 23 records");

    CveReport rep = cve_report(db, spec);
    expect(rep.v_count == 18, "expected 18 V, got " + std::to_string(rep.v_count));
    expect(rep.p_count == 1, "expected 1 P, got " + std::to_string(rep.p_count));
    expect(rep.e_count == 4, "expected 4 E, got " + std::to_string(rep.e_count));
    expect(rep.mitigated_count == 19, "expected 19 mitigated");

    std::set<std::string> e_ids, p_ids;
    for (const auto& v : rep.verdicts) {
        if (v.category == CveCategory::E) e_ids.insert(v.cve_id);
        if (v.category == CveCategory::P) p_ids.insert(v.cve_id);
    }
    expect(p_ids == std::set<std::string>{"CVE-2015-8709"}, "P must be exactly CVE-2015-8709");
    expect(e_ids == std::set<std::string>{"CVE-2018-6927", "CVE-2017-17053", "CVE-2017-17052",
                                          "CVE-2016-0723"},
           "E set mismatch");
}

// --- 2. Granularity ordering -------------------------------------------------

void criterion_granularity_ordering() {
    std::mt19937_64 rng(2025);
    for (int iter = 0; iter < 100; iter++) {
        KernelImage img = kftest::random_image(rng);
        if (img.syscall_entries().empty()) {
            iter--;
            continue;
        }
        auto runs = kftest::random_runs(rng, img, 4, 0.35);

        std::optional<KernelProfile> block;
        for (const auto& r : runs) {
            auto res = accumulate(block ? &*block : nullptr, r, img, "rand");
            block = std::move(res.profile);
        }
        KernelProfile symbol = coarsen(*block, Granularity::Symbol, img);

        SyscallList list{"rand", {}};
        for (const auto& [sc, entry] : img.syscall_entries()) list.syscalls.insert(sc);
        KernelProfile syscall = expand_profile(symbol, closure(img, list), img);

        double rb = reduction_stats(specialize(img, *block)).text_reduced_pct;
        double rs = reduction_stats(specialize(img, symbol)).text_reduced_pct;
        double rsc = reduction_stats(specialize(img, syscall)).text_reduced_pct;
        expect(rb >= rs && rs >= rsc,
               "ordering violated: B=" + std::to_string(rb) + " S=" + std::to_string(rs) +
                   " SC=" + std::to_string(rsc));
    }
}

// --- 3. Masking partition -----------------------------------------------------

void check_partition(const KernelImage& img, const KernelProfile& profile) {
    SpecializedKernel spec = specialize(img, profile);
    expect(spec.text.size() == img.text_size(), "specialized length differs");
    IntervalSet cov = profile.coverage();
    for (uint64_t off = 0; off < img.text_size(); off++) {
        bool kept = cov.contains(img.base_vaddr() + off);
        bool identical = spec.text[off] == img.text()[off];
        bool trapped = spec.text[off] == kTrapByte;
        expect(kept ? (identical && !trapped) : trapped,
               "byte " + std::to_string(off) + " violates the partition");
    }
}

void criterion_masking_partition() {
    check_partition(*toy_image(), kftest::build_httpd_block_profile(*toy_image()));
    std::mt19937_64 rng(3);
    for (int iter = 0; iter < 100; iter++) {
        KernelImage img = kftest::random_image(rng);
        check_partition(img, kftest::random_block_profile(rng, img, 0.4));
    }
}

// --- 4. View isolation & trap soundness ---------------------------------------

void criterion_view_isolation() {
    auto img = toy_image();
    sim::SimConfig cfg;
    cfg.irq_map = sim::load_irq_map(kftest::toy_bundle_dir(), *img);
    sim::Simulator sim(img, cfg);

    std::map<std::string, KernelProfile> profiles = {
        {"httpd", kftest::build_httpd_block_profile(*img)},
        {"redis", symbols_profile(*img, {"sys_write", "tty_ioctl", "sys_futex"}, "redis")},
        {"gzip", symbols_profile(*img, {"sys_close", "sys_read"}, "gzip")}};

    // Effective per-app coverage oracle: profile plus whitelist extents.
    std::map<std::string, IntervalSet> coverage;
    std::map<std::string, std::vector<uint8_t>> expected_text;
    for (auto& [app, profile] : profiles) {
        ExtentSet extents = profile.ranges;
        for (const auto& h : img->top_half_handlers()) extents.insert(img->find_symbol(h)->extent());
        coverage[app] = IntervalSet::from_extents(extents);
        expected_text[app] = kftest::oracle_mask_two_pass(*img, extents);
    }

    std::map<sim::Pid, std::string> app_of;
    for (auto& [app, profile] : profiles) app_of[sim.execve(app, profile)] = app;

    std::mt19937_64 rng(4242);
    size_t exec_events = 0, traps = 0;
    for (int i = 0; i < 1000; i++) {
        std::vector<sim::Pid> live;
        for (auto& [pid, app] : app_of)
            if (sim.process(pid).state != sim::ProcState::Killed) live.push_back(pid);

        if (!sim.current() || rng() % 3 == 0) {
            sim.context_switch(live[rng() % live.size()]);
            continue;
        }

        sim::Pid pid = *sim.current();
        std::string app = app_of[pid];
        uint64_t vaddr = img->base_vaddr() + rng() % img->text_size();

        // view isolation: translation lands in the process's own region
        sim::RegionId own = sim.process(pid).page_table.region();
        sim::Translation t = sim.translate(pid, vaddr);
        expect(t.region == own, "translation escaped the process's region");
        expect(sim.view_byte(pid, vaddr) == expected_text[app][vaddr - img->base_vaddr()],
               "view byte differs from the process's own masked text");

        std::map<sim::Pid, sim::ProcState> before;
        for (auto& [p, a] : app_of) before[p] = sim.process(p).state;

        bool in_profile = coverage[app].contains(vaddr);
        sim::ExecOutcome out = sim.exec_kernel_addr(vaddr);
        exec_events++;
        expect(out.trapped == !in_profile, "exec outcome disagrees with the membership oracle");

        if (out.trapped) {
            traps++;
            expect(sim.process(pid).state == sim::ProcState::Killed, "faulting process not killed");
            for (auto& [p, st] : before)
                if (p != pid)
                    expect(sim.process(p).state == st, "kill leaked to another process");
            // relaunch a fresh instance so the walk keeps three live apps
            sim.teardown(pid);
            app_of.erase(pid);
            app_of[sim.execve(app, profiles.at(app))] = app;
        }
    }
    expect(exec_events > 300, "walk produced too few exec events");
    expect(traps > 10, "walk produced too few traps to be meaningful");
}

// --- 5. Interrupt deferral -----------------------------------------------------

void criterion_interrupt_deferral() {
    auto img = toy_image();
    sim::SimConfig cfg;
    cfg.irq_map = sim::load_irq_map(kftest::toy_bundle_dir(), *img);
    sim::Simulator sim(img, cfg);

    // none of these profiles includes a bottom-half handler
    std::vector<sim::Pid> pids = {
        sim.execve("a", symbols_profile(*img, {"sys_read"}, "a")),
        sim.execve("b", symbols_profile(*img, {"sys_write"}, "b")),
        sim.execve("c", symbols_profile(*img, {"sys_close"}, "c"))};

    std::vector<std::string> raised;
    std::mt19937_64 rng(55);
    for (int i = 0; i < 50; i++) {
        sim.context_switch(pids[rng() % pids.size()]);
        std::string irq = (i % 2 == 0) ? "net_rx" : "timer";
        sim.raise_interrupt(irq);
        raised.push_back(irq);
    }

    expect(sim.softirq_queue().size() == 50, "queue must hold all 50 softirqs");
    for (size_t i = 0; i < raised.size(); i++)
        expect(sim.softirq_queue()[i].first == raised[i], "queue order is not FIFO");
    for (const auto& e : sim.event_log())
        expect(e.kind != "Fault", "a top half trapped");

    size_t drained = sim.run_ksoftirqd();
    expect(drained == 50, "expected 50 drained, got " + std::to_string(drained));

    std::vector<std::string> bottom;
    for (const auto& e : sim.event_log())
        if (e.kind == "BottomHalf") {
            bottom.push_back(e.fields.at("irq").get<std::string>());
            expect(e.fields.at("region").get<sim::RegionId>() == sim.base_region(),
                   "bottom half ran outside the base kernel view");
            expect(e.fields.at("pid").get<sim::Pid>() == sim.ksoftirqd_pid(),
                   "bottom half ran outside ksoftirqd");
        }
    expect(bottom == raised, "bottom halves must replay the raise order exactly once each");
    for (sim::Pid p : pids)
        expect(sim.process(p).state != sim::ProcState::Killed, "an app died from an interrupt");
}

// --- 6. Memory-pressure calibration --------------------------------------------

void criterion_memory_pressure() {
    KernelProfile tiny;
    tiny.app_name = "sleep";

    struct Case {
        uint64_t ram, baseline, expected_max;
    };
    for (const Case& c : {Case{8192, 2192, 750}, Case{4096, 1336, 345}}) {
        sim::SimConfig cfg;
        cfg.ram_mb = c.ram;
        cfg.per_kernel_mb = 8;
        cfg.baseline_reserved_mb = c.baseline;
        sim::Simulator sim(toy_image(), cfg);
        expect(sim.memory_pressure().max_kernels == c.expected_max, "max_kernels calibration");

        uint64_t first_pressured_region = 0;
        while (!sim.memory_pressure().pressured) {
            sim.execve("sleep", tiny);
            if (sim.memory_pressure().pressured) first_pressured_region = sim.region_count();
            expect(sim.region_count() <= c.expected_max + 1, "pressure flipped too late");
        }
        expect(first_pressured_region == c.expected_max + 1,
               "pressure must flip at kernel #" + std::to_string(c.expected_max + 1) + ", got " +
                   std::to_string(first_pressured_region));
        expect(sim.memory_pressure().committed_mb == first_pressured_region * 8,
               "committed accounting");
    }
}

// --- 7. Gadget counter oracle ----------------------------------------------------

void criterion_gadget_oracle() {
    std::mt19937_64 rng(7777);
    for (int iter = 0; iter < 200; iter++) {
        std::vector<uint8_t> buf(4096);
        for (auto& b : buf) b = uint8_t(rng());
        expect(count_rop_gadgets(buf, 20) == kftest::oracle_count_gadgets(buf, 20),
               "gadget count disagrees with the oracle");
    }
    for (int iter = 0; iter < 100; iter++) {
        std::vector<uint8_t> buf(4096);
        for (auto& b : buf) b = uint8_t(rng());
        uint64_t before = count_rop_gadgets(buf, 20);
        for (int r = 0; r < 8; r++) {
            size_t at = rng() % buf.size();
            size_t len = std::min<size_t>(1 + rng() % 128, buf.size() - at);
            for (size_t i = 0; i < len; i++) buf[at + i] = kTrapByte;
        }
        expect(count_rop_gadgets(buf, 20) <= before, "masking increased the gadget count");
    }
}

// --- 8. Profiler fixpoint & order independence ------------------------------------

void criterion_profiler_fixpoint() {
    std::mt19937_64 rng(888);
    for (int iter = 0; iter < 10; iter++) {
        KernelImage img = kftest::random_image(rng);
        auto runs = kftest::random_runs(rng, img, 6, 0.3);

        auto build = [&](const std::vector<size_t>& order) {
            std::optional<KernelProfile> p;
            for (size_t idx : order) {
                auto res = accumulate(p ? &*p : nullptr, runs[idx], img, "perm");
                p = std::move(res.profile);
            }
            return p->ranges;
        };
        std::vector<size_t> order(runs.size());
        for (size_t i = 0; i < order.size(); i++) order[i] = i;
        ExtentSet reference = build(order);
        for (int perm = 0; perm < 20; perm++) {
            std::shuffle(order.begin(), order.end(), rng);
            expect(build(order) == reference, "profile depends on run order");
        }
    }

    // the staged fixture saturates at run 10; window 3 must stop by run 15
    const KernelImage& img = *toy_image();
    std::optional<KernelProfile> profile;
    std::vector<size_t> history;
    uint64_t consumed = 0;
    for (int run = 1; run <= 15; run++) {
        char name[32];
        std::snprintf(name, sizeof(name), "httpd-run%02d.trace", run);
        TraceRun tr = segment(parse_trace_file(kftest::fixtures_dir() / "traces" / name));
        auto res = accumulate(profile ? &*profile : nullptr, tr, img, "httpd");
        profile = std::move(res.profile);
        history.push_back(profile->ranges.size());
        consumed = profile->runs_consumed;
        if (is_stable(history, 3)) break;
    }
    expect(is_stable(history, 3), "fixture profile never stabilized");
    expect(consumed <= 15, "stability took more than 15 runs");
    expect(history[9] == history.back(), "fixture coverage must saturate at run 10");
}

// --- 9. End-to-end determinism -------------------------------------------------------

void criterion_determinism() {
    std::string cli = kftest::cli_bin();
    expect(!cli.empty(), "KF_CLI_BIN not set");
    std::string toy = kftest::toy_bundle_dir().string();
    std::string traces;
    for (int i = 1; i <= 15; i++) {
        char name[64];
        std::snprintf(name, sizeof(name), "httpd-run%02d.trace", i);
        traces += " " + (kftest::fixtures_dir() / "traces" / name).string();
    }

    auto run_pipeline = [&](const fs::path& dir) {
        auto sh = [&](const std::string& cmd) {
            int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
            expect(WEXITSTATUS(rc) == 0, "pipeline step failed: " + cmd);
        };
        fs::path profile = dir / "profile.json";
        sh(cli + " profile " + toy + traces + " --app httpd -o " + profile.string());
        sh(cli + " specialize " + toy + " " + profile.string() + " -o " + (dir / "httpd.bin").string());
        sh(cli + " simulate " + toy + " " + (kftest::fixtures_dir() / "scenarios" / "demo.jsonl").string() +
           " --profiles httpd=" + profile.string() + " -o " + (dir / "events.jsonl").string());
        sh(cli + " report " + toy + " " + (dir / "httpd.bin").string() + " --cve-db " +
           (kftest::fixtures_dir() / "cves.json").string() + " --format json -o " +
           (dir / "report.json").string());
        sh(cli + " report " + toy + " " + (dir / "httpd.bin").string() + " --cve-db " +
           (kftest::fixtures_dir() / "cves.json").string() + " --format csv -o " +
           (dir / "report.csv").string());
    };

    fs::path a = kftest::fresh_tmpdir("det-a");
    fs::path b = kftest::fresh_tmpdir("det-b");
    run_pipeline(a);
    run_pipeline(b);

    for (const char* name : {"profile.json", "httpd.bin", "httpd.bin.json", "events.jsonl",
                             "report.json", "report.csv"}) {
        auto ba = read_binary_file(a / name);
        auto bb = read_binary_file(b / name);
        expect(ba == bb, std::string("output differs between runs: ") + name);
        expect(!ba.empty(), std::string("empty output: ") + name);
    }
}

// --- 10. Sharing metric ----------------------------------------------------------------

void criterion_sharing_metric() {
    auto build_pair = [](int shared, int only_a, int only_b) {
        KernelProfile a, b;
        a.granularity = b.granularity = Granularity::Block;
        uint64_t addr = 0x100000;
        auto next = [&]() {
            ByteRange r{addr, 100};
            addr += 128;
            return r;
        };
        for (int i = 0; i < shared; i++) {
            ByteRange r = next();
            a.ranges.insert(r);
            b.ranges.insert(r);
        }
        for (int i = 0; i < only_a; i++) a.ranges.insert(next());
        for (int i = 0; i < only_b; i++) b.ranges.insert(next());
        return std::pair{a, b};
    };

    auto [a20, b20] = build_pair(20, 50, 30); // 20 / 100 blocks shared
    expect(std::abs(kernel_sharing(a20, b20) - 0.20) <= 0.005, "expected sharing 0.20");

    auto [a83, b83] = build_pair(83, 10, 7); // 83 / 100 blocks shared
    expect(std::abs(kernel_sharing(a83, b83) - 0.83) <= 0.005, "expected sharing 0.83");
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<void()> fn;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "cve-classification-ground-truth", 1.0, criterion_cve_ground_truth},
        {2, "granularity-ordering", 10.0, criterion_granularity_ordering},
        {3, "masking-partition", 10.0, criterion_masking_partition},
        {4, "view-isolation-and-trap-soundness", 5.0, criterion_view_isolation},
        {5, "interrupt-deferral", 5.0, criterion_interrupt_deferral},
        {6, "memory-pressure-calibration", 1.0, criterion_memory_pressure},
        {7, "gadget-counter-oracle", 30.0, criterion_gadget_oracle},
        {8, "profiler-fixpoint-and-order-independence", 10.0, criterion_profiler_fixpoint},
        {9, "end-to-end-determinism", 30.0, criterion_determinism},
        {10, "sharing-metric", 1.0, criterion_sharing_metric},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            c.fn();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (ok && secs > c.budget_seconds) {
            ok = false;
            detail = "exceeded " + std::to_string(c.budget_seconds) + "s budget";
        }
        std::printf("[%s] %2d. %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", c.id, c.name, secs,
                    detail.empty() ? "" : " -- ", detail.c_str());
        if (!ok) failures++;
    }
    if (failures) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
