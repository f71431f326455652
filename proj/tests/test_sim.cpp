#include "kf/error.hpp"
#include "kf/scenario.hpp"
#include "kf/sha256.hpp"
#include "kf/sim.hpp"
#include "kf/util.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace kf;
using namespace kf::sim;

namespace {

std::shared_ptr<const KernelImage> toy() {
    static auto img = std::make_shared<KernelImage>(KernelImage::load(kftest::toy_bundle_dir()));
    return img;
}

SimConfig toy_config() {
    SimConfig cfg;
    cfg.irq_map = load_irq_map(kftest::toy_bundle_dir(), *toy());
    return cfg;
}

KernelProfile symbols_profile(const KernelImage& img, std::initializer_list<const char*> names,
                              const std::string& app = "app") {
    KernelProfile p;
    p.app_name = app;
    p.granularity = Granularity::Symbol;
    for (const char* n : names) p.ranges.insert(img.find_symbol(n)->extent());
    return p;
}

uint64_t entry_of(const KernelImage& img, const char* symbol) {
    return img.find_symbol(symbol)->start;
}

std::string view_hash(const Simulator& sim, Pid pid) {
    const PhysRegion& r = sim.region(sim.process(pid).page_table.region());
    return sha256_hex(std::span<const uint8_t>(r.bytes));
}

} // namespace

TEST_CASE("boot creates the base kernel and ksoftirqd only") {
    Simulator sim(toy(), toy_config());
    CHECK(sim.region_count() == 1);
    CHECK(sim.process_count() == 1);
    CHECK(sim.softirq_queue().empty());
    CHECK(sim.clock() == 0);
    CHECK_FALSE(sim.current().has_value());
    CHECK(sim.memory_pressure().committed_mb == sim.config().per_kernel_mb);

    size_t boot_events = 0;
    for (const auto& e : sim.event_log())
        if (e.kind == "Boot") boot_events++;
    CHECK(boot_events == 1);

    // ksoftirqd maps every page to the base region
    for (uint64_t page = 0; page < toy()->page_count(); page++)
        CHECK(sim.process(sim.ksoftirqd_pid()).page_table.entry(page).region == sim.base_region());
}

TEST_CASE("execve clones one region per process") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("httpd", symbols_profile(*toy(), {"sys_read"}, "httpd"));
    CHECK(sim.region_count() == 2);
    CHECK(sim.process(p1).page_table.region() != sim.base_region());
    CHECK(sim.process(p1).state == ProcState::Runnable);
    CHECK(sim.clock() == sim.config().launch_cost_steps);

    Pid p2 = sim.execve("redis", symbols_profile(*toy(), {"sys_write"}, "redis"));
    CHECK(sim.region_count() == 3);
    CHECK(sim.process(p2).page_table.region() != sim.process(p1).page_table.region());
}

TEST_CASE("a full-coverage profile reproduces the base kernel bytes") {
    Simulator sim(toy(), toy_config());
    KernelProfile all;
    all.app_name = "everything";
    all.ranges.insert({toy()->base_vaddr(), toy()->text_size()});
    Pid pid = sim.execve("everything", all);
    const PhysRegion& r = sim.region(sim.process(pid).page_table.region());
    CHECK(r.bytes == toy()->text());
}

TEST_CASE("invalid profiles and memory ceilings fail execve") {
    Simulator sim(toy(), toy_config());
    KernelProfile out_of_range;
    out_of_range.ranges.insert({toy()->text_end() - 8, 64});
    CHECK_THROWS_AS((void)sim.execve("bad", out_of_range), Error);

    SimConfig small = toy_config();
    small.ram_mb = 24; // base (8) + two more copies
    small.baseline_reserved_mb = 0;
    Simulator tight(toy(), small);
    (void)tight.execve("a", symbols_profile(*toy(), {"sys_read"}));
    (void)tight.execve("b", symbols_profile(*toy(), {"sys_read"}));
    CHECK_THROWS_AS((void)tight.execve("c", symbols_profile(*toy(), {"sys_read"})), Error);
}

TEST_CASE("context switch changes the current pointer and nothing else") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("httpd", symbols_profile(*toy(), {"sys_read"}, "httpd"));
    Pid p2 = sim.execve("redis", symbols_profile(*toy(), {"sys_write"}, "redis"));

    std::string h1 = view_hash(sim, p1);
    std::string h2 = view_hash(sim, p2);

    sim.context_switch(p1);
    CHECK(sim.current() == p1);
    CHECK(sim.process(p1).state == ProcState::Running);
    sim.context_switch(p2);
    CHECK(sim.process(p1).state == ProcState::Runnable);
    sim.context_switch(p1);

    CHECK(view_hash(sim, p1) == h1);
    CHECK(view_hash(sim, p2) == h2);

    CHECK_THROWS_AS(sim.context_switch(999), Error);
}

TEST_CASE("per-process views stay constant through 1000 random switches") {
    Simulator sim(toy(), toy_config());
    std::vector<Pid> pids = {sim.execve("a", symbols_profile(*toy(), {"sys_read"}, "a")),
                             sim.execve("b", symbols_profile(*toy(), {"sys_write"}, "b")),
                             sim.execve("c", symbols_profile(*toy(), {"sys_open"}, "c"))};
    std::map<Pid, std::string> hashes;
    for (Pid p : pids) hashes[p] = view_hash(sim, p);

    std::mt19937_64 rng(13);
    for (int i = 0; i < 1000; i++) sim.context_switch(pids[rng() % pids.size()]);
    for (Pid p : pids) CHECK(view_hash(sim, p) == hashes[p]);
}

TEST_CASE("translation yields identical offsets in every view") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("a", symbols_profile(*toy(), {"sys_read"}, "a"));
    Pid p2 = sim.execve("b", symbols_profile(*toy(), {"sys_write"}, "b"));

    std::mt19937_64 rng(19);
    for (int i = 0; i < 200; i++) {
        uint64_t vaddr = toy()->base_vaddr() + rng() % toy()->text_size();
        Translation t0 = sim.translate(sim.ksoftirqd_pid(), vaddr);
        Translation t1 = sim.translate(p1, vaddr);
        Translation t2 = sim.translate(p2, vaddr);
        CHECK(t0.offset == t1.offset); // same layout in every kernel copy
        CHECK(t1.offset == t2.offset);
        CHECK(t1.region != t2.region); // but always the process's own copy
    }
}

TEST_CASE("exec outcome follows the current view") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("httpd", symbols_profile(*toy(), {"sys_read"}, "httpd"));
    Pid p2 = sim.execve("gzip", symbols_profile(*toy(), {"sys_close"}, "gzip"));

    uint64_t read_entry = entry_of(*toy(), "sys_read");

    sim.context_switch(p1);
    ExecOutcome ok = sim.exec_kernel_addr(read_entry);
    CHECK_FALSE(ok.trapped);
    CHECK(ok.symbol == "sys_read");

    // same vaddr, different view: p2 lacks sys_read and dies for trying
    sim.context_switch(p2);
    ExecOutcome trap = sim.exec_kernel_addr(read_entry);
    CHECK(trap.trapped);
    CHECK(sim.process(p2).state == ProcState::Killed);
    CHECK_FALSE(sim.current().has_value());
    CHECK(sim.process(p1).state == ProcState::Runnable); // untouched

    CHECK_THROWS_AS(sim.context_switch(p2), Error); // killed pids cannot run

    // ksoftirqd executes anywhere in text: the base kernel is unmasked
    sim.context_switch(sim.ksoftirqd_pid());
    std::mt19937_64 rng(17);
    for (int i = 0; i < 64; i++) {
        uint64_t addr = toy()->base_vaddr() + rng() % toy()->text_size();
        CHECK_FALSE(sim.exec_kernel_addr(addr).trapped);
    }

    CHECK_THROWS_AS((void)sim.exec_kernel_addr(toy()->base_vaddr() - 1), Error);
}

TEST_CASE("report-only fault policy leaves the process runnable") {
    SimConfig cfg = toy_config();
    cfg.fault_policy = FaultPolicy::ReportOnly;
    Simulator sim(toy(), cfg);
    Pid pid = sim.execve("httpd", symbols_profile(*toy(), {"sys_read"}, "httpd"));
    sim.context_switch(pid);
    ExecOutcome out = sim.exec_kernel_addr(entry_of(*toy(), "mm_init"));
    CHECK(out.trapped);
    CHECK(sim.process(pid).state == ProcState::Running);
    CHECK(sim.current() == pid);
}

TEST_CASE("interrupts run the whitelisted top half and defer the bottom half") {
    Simulator sim(toy(), toy_config());
    // profile deliberately excludes both bottom halves and both top halves;
    // the launch-time whitelist union still maps the top halves in
    Pid pid = sim.execve("gzip", symbols_profile(*toy(), {"sys_close"}, "gzip"));
    sim.context_switch(pid);

    sim.raise_interrupt("net_rx");
    CHECK(sim.softirq_queue().size() == 1);
    sim.raise_interrupt("timer");
    CHECK(sim.softirq_queue().size() == 2);
    CHECK(sim.softirq_queue()[0].first == "net_rx"); // FIFO
    CHECK(sim.softirq_queue()[1].first == "timer");
    CHECK(sim.process(pid).state == ProcState::Running); // no trap, still alive

    for (const auto& e : sim.event_log())
        if (e.kind == "Fault") FAIL("top half trapped");

    CHECK_THROWS_AS(sim.raise_interrupt("sata"), Error);
}

TEST_CASE("ksoftirqd drains the queue under the base kernel view") {
    Simulator sim(toy(), toy_config());
    Pid pid = sim.execve("gzip", symbols_profile(*toy(), {"sys_close"}, "gzip"));
    sim.context_switch(pid);
    sim.raise_interrupt("net_rx");
    sim.raise_interrupt("timer");
    sim.raise_interrupt("net_rx");

    size_t drained = sim.run_ksoftirqd();
    CHECK(drained == 3);
    CHECK(sim.softirq_queue().empty());
    CHECK(sim.current() == pid); // restored

    std::vector<std::string> bottom_irqs;
    for (const auto& e : sim.event_log())
        if (e.kind == "BottomHalf") {
            bottom_irqs.push_back(e.fields["irq"].get<std::string>());
            CHECK(e.fields["region"].get<RegionId>() == sim.base_region());
            CHECK(e.fields["pid"].get<Pid>() == sim.ksoftirqd_pid());
        }
    CHECK(bottom_irqs == std::vector<std::string>{"net_rx", "timer", "net_rx"});

    CHECK(sim.run_ksoftirqd() == 0); // empty queue

    // the bottom half is masked in gzip's kernel but runs fine under base
    ExecOutcome under_gzip = sim.exec_kernel_addr(entry_of(*toy(), "net_rx_action"));
    CHECK(under_gzip.trapped);
}

TEST_CASE("shared data is one store across processes") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("a", symbols_profile(*toy(), {"sys_read", "tty_ioctl"}, "a"));
    Pid p2 = sim.execve("b", symbols_profile(*toy(), {"sys_write"}, "b"));

    sim.context_switch(p1);
    sim.shared_write("k", "v");
    sim.context_switch(p2);
    CHECK(sim.shared_read("k") == "v");
    CHECK_THROWS_AS((void)sim.shared_read("nope"), Error);

    // function-pointer analogue: same virtual layout makes a stored vaddr
    // meaningful in every view; execute rights still follow each profile
    uint64_t fp = entry_of(*toy(), "tty_ioctl");
    sim.shared_write("fp", format_hex(fp));
    sim.context_switch(p1);
    uint64_t from_store = *parse_hex(sim.shared_read("fp").get<std::string>());
    CHECK_FALSE(sim.exec_kernel_addr(from_store).trapped); // tty_ioctl in a's profile

    sim.context_switch(p2);
    CHECK(sim.exec_kernel_addr(from_store).trapped); // absent from b's profile
}

TEST_CASE("shared reads always observe the latest write") {
    Simulator sim(toy(), toy_config());
    Pid p1 = sim.execve("a", symbols_profile(*toy(), {"sys_read"}, "a"));
    Pid p2 = sim.execve("b", symbols_profile(*toy(), {"sys_write"}, "b"));
    std::mt19937_64 rng(29);
    nlohmann::json last;
    for (int i = 0; i < 100; i++) {
        sim.context_switch(rng() % 2 ? p1 : p2);
        if (rng() % 2 || last.is_null()) {
            last = int(rng() % 1000);
            sim.shared_write("counter", last);
        } else {
            CHECK(sim.shared_read("counter") == last);
        }
    }
}

TEST_CASE("memory pressure thresholds") {
    SimConfig cfg = toy_config();
    cfg.ram_mb = 8192;
    cfg.per_kernel_mb = 8;
    cfg.baseline_reserved_mb = 2192;
    Simulator sim(toy(), cfg);
    CHECK(sim.memory_pressure().max_kernels == 750);
    CHECK_FALSE(sim.memory_pressure().pressured); // base copy alone

    SimConfig cfg2 = toy_config();
    cfg2.ram_mb = 4096;
    cfg2.baseline_reserved_mb = 1336;
    Simulator sim2(toy(), cfg2);
    CHECK(sim2.memory_pressure().max_kernels == 345);
}

TEST_CASE("teardown frees the region and the committed memory") {
    Simulator sim(toy(), toy_config());
    Pid pid = sim.execve("a", symbols_profile(*toy(), {"sys_read"}, "a"));
    uint64_t before = sim.memory_pressure().committed_mb;
    CHECK(sim.region_count() == 2);

    sim.teardown(pid);
    CHECK(sim.region_count() == 1);
    CHECK(sim.memory_pressure().committed_mb == before - sim.config().per_kernel_mb);
    CHECK_FALSE(sim.has_process(pid));

    CHECK_THROWS_AS(sim.teardown(pid), Error);                 // already gone
    CHECK_THROWS_AS(sim.teardown(sim.ksoftirqd_pid()), Error); // permanent
}

TEST_CASE("module insertion only under the base kernel") {
    Simulator sim(toy(), toy_config());
    Pid pid = sim.execve("a", symbols_profile(*toy(), {"sys_read"}, "a"));
    sim.context_switch(pid);
    CHECK_THROWS_AS(sim.insert_module("evil"), Error);
    sim.context_switch(sim.ksoftirqd_pid());
    CHECK_NOTHROW(sim.insert_module("e1000"));
}

TEST_CASE("identical scripts produce byte-identical event logs") {
    auto run_once = [&]() {
        SimConfig cfg = toy_config();
        Simulator sim(toy(), cfg);
        std::map<std::string, KernelProfile> profiles = {
            {"httpd", kftest::build_httpd_block_profile(*toy())}};
        std::ifstream script(kftest::fixtures_dir() / "scenarios" / "demo.jsonl");
        REQUIRE(script.good());
        run_scenario(sim, script, profiles);
        std::ostringstream out;
        write_event_log(sim, out);
        return out.str();
    };
    std::string first = run_once();
    CHECK_FALSE(first.empty());
    CHECK(first == run_once());
}

TEST_CASE("scenario parser rejects junk with a line number") {
    Simulator sim(toy(), toy_config());
    std::istringstream bad("{\"op\":\"hover\"}\n");
    CHECK_THROWS_WITH_AS(run_scenario(sim, bad, {}), doctest::Contains("line 1"), Error);

    Simulator sim2(toy(), toy_config());
    std::istringstream noop("# comment only\n\n");
    CHECK_NOTHROW(run_scenario(sim2, noop, {}));
}
