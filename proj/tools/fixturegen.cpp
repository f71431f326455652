// Deterministic fixture generator. Everything under fixtures/ is produced by
// this tool; rerunning it reproduces the committed files byte for byte.
//
// The toy kernel is a 64KB bundle shaped like a miniature vmlinux text: 40
// symbols (mostly functions with public CVE history, plus syscall entries and
// interrupt handlers), 200 basic blocks, 12 syscalls. The httpd trace set is
// staged so coverage saturates at run 10, and the final block profile leaves
// the CVE chain functions in the exact removal states the report fixtures
// assert against.

#include "kf/image.hpp"
#include "kf/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace kf;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kBaseVaddr = 0xffffffff81000000ull;
constexpr uint64_t kTextSize = 65536;
constexpr uint64_t kPageSize = 4096;
constexpr uint64_t kSymbolGap = 64; // padding between symbols, never in a block

struct SymbolPlan {
    const char* name;
    uint64_t size;
    int block_count;
    bool tiled; // blocks cover every byte (no intra-symbol padding)
};

// 40 symbols, 200 blocks, 49408 text bytes plus gaps.
const SymbolPlan kSymbols[] = {
    {"sys_read", 2048, 8, false},
    {"sys_write", 2048, 8, false},
    {"sys_open", 1792, 7, false},
    {"sys_close", 1024, 5, false},
    {"sys_mmap", 1792, 7, false},
    {"sys_futex", 1024, 5, false},
    {"handle_timer_irq", 512, 3, false},
    {"handle_net_rx_irq", 512, 3, false},
    {"run_timer_softirq", 1280, 6, false},
    {"net_rx_action", 1536, 7, false},
    {"compat_get_timex", 1024, 5, false},
    {"ext4_get_group_info", 1536, 6, false},
    {"ext4_update_inline_data", 1792, 7, false},
    {"ext4_xattr_set_entry", 2048, 8, false},
    {"do_get_mempolicy", 1280, 5, false},
    {"blkcg_init_queue", 1024, 4, false},
    {"futex_requeue", 1536, 6, true},
    {"proc_pid_cmdline_read", 1280, 5, false},
    {"key_alloc", 1024, 4, false},
    {"perf_cpu_time_max_percent_handler", 768, 3, false},
    {"madvise_willneed", 1024, 4, false},
    {"dm_get_from_kobject", 768, 3, false},
    {"__dm_destroy", 1024, 4, false},
    {"pinctrl_unregister", 1280, 5, false},
    {"amd_gpio_remove", 768, 3, false},
    {"i8042_interrupt", 1024, 4, false},
    {"i8042_start", 512, 2, false},
    {"i8042_stop", 512, 2, false},
    {"construct_key_and_link", 1792, 7, false},
    {"construct_get_dest_keyring", 1024, 4, false},
    {"hmac_create", 1280, 5, false},
    {"shash_no_setkey", 768, 3, false},
    {"init_new_context", 1024, 4, true},
    {"mm_init", 1536, 6, true},
    {"get_net_ns_by_id", 1024, 4, false},
    {"selinux_setprocattr", 1280, 5, false},
    {"tty_ioctl", 2048, 8, true},
    {"ptrace_has_cap", 1280, 5, true},
    {"__ptrace_may_access", 1536, 6, true},
    {"x509_decode_time", 1024, 4, false},
};

const std::pair<const char*, const char*> kSyscalls[] = {
    {"read", "sys_read"},
    {"write", "sys_write"},
    {"open", "sys_open"},
    {"close", "sys_close"},
    {"mmap", "sys_mmap"},
    {"futex", "sys_futex"},
    {"adjtimex", "compat_get_timex"},
    {"madvise", "madvise_willneed"},
    {"ioctl", "tty_ioctl"},
    {"ptrace", "__ptrace_may_access"},
    {"request_key", "construct_key_and_link"},
    {"get_mempolicy", "do_get_mempolicy"},
};

const std::pair<const char*, const char*> kCallGraph[] = {
    {"sys_read", "proc_pid_cmdline_read"},
    {"sys_read", "ext4_get_group_info"},
    {"sys_write", "ext4_update_inline_data"},
    {"sys_write", "selinux_setprocattr"},
    {"sys_write", "perf_cpu_time_max_percent_handler"},
    {"ext4_update_inline_data", "ext4_xattr_set_entry"},
    {"sys_open", "ext4_get_group_info"},
    {"sys_open", "key_alloc"},
    {"sys_open", "tty_ioctl"},
    {"sys_close", "blkcg_init_queue"},
    {"sys_mmap", "do_get_mempolicy"},
    {"sys_mmap", "init_new_context"},
    {"do_get_mempolicy", "mm_init"},
    {"sys_futex", "futex_requeue"},
    {"__ptrace_may_access", "ptrace_has_cap"},
    {"construct_key_and_link", "construct_get_dest_keyring"},
    {"construct_key_and_link", "key_alloc"},
    {"construct_key_and_link", "x509_decode_time"},
    {"hmac_create", "shash_no_setkey"},
    {"i8042_interrupt", "i8042_start"},
    {"i8042_interrupt", "i8042_stop"},
    {"amd_gpio_remove", "pinctrl_unregister"},
    {"dm_get_from_kobject", "__dm_destroy"},
    {"__dm_destroy", "dm_get_from_kobject"}, // teardown/lookup race, cyclic on purpose
    {"net_rx_action", "get_net_ns_by_id"},
};

struct CvePlan {
    const char* id;
    const char* effect;
    std::vector<const char*> functions;
    const char* description;
};

const CvePlan kCves[] = {
    {"CVE-2018-11508", "Leak", {"compat_get_timex"},
     "Uninitialized kernel stack bytes leak to userspace through the adjtimex timex copy-out."},
    {"CVE-2018-10881", "DoS", {"ext4_get_group_info"},
     "Out-of-bounds access on a crafted ext4 image when resolving block group metadata."},
    {"CVE-2018-10880", "DoS", {"ext4_update_inline_data"},
     "Stack out-of-bounds write while growing inline data on a crafted ext4 image."},
    {"CVE-2018-10879", "DoS", {"ext4_xattr_set_entry"},
     "Use-after-free when rewriting extended attribute entries on a crafted ext4 image."},
    {"CVE-2018-10675", "DoS", {"do_get_mempolicy"},
     "Use-after-free via incorrect nodemask handling in the mempolicy query path."},
    {"CVE-2018-7480", "DoS", {"blkcg_init_queue"},
     "Double free in the block cgroup init error path."},
    {"CVE-2018-6927", "DoS", {"futex_requeue"},
     "Integer overflow on a negative wake count in futex requeue."},
    {"CVE-2018-1120", "DoS", {"proc_pid_cmdline_read"},
     "Unbounded procfs cmdline read against a crafted mapping stalls the reader."},
    {"CVE-2017-18270", "DoS", {"key_alloc"},
     "Missing cross-user permission check when allocating keyring entries."},
    {"CVE-2017-18255", "DoS", {"perf_cpu_time_max_percent_handler"},
     "Integer overflow through a large sysctl value in the perf cpu time handler."},
    {"CVE-2017-18208", "DoS", {"madvise_willneed"},
     "Infinite loop for MADV_WILLNEED over a DAX mapping."},
    {"CVE-2017-18203", "DoS", {"dm_get_from_kobject", "__dm_destroy"},
     "Race between device-mapper kobject lookup and device destruction."},
    {"CVE-2017-18174", "DoS", {"pinctrl_unregister", "amd_gpio_remove"},
     "Double free in the amd pinctrl driver remove path."},
    {"CVE-2017-18079", "DoS", {"i8042_interrupt", "i8042_start", "i8042_stop"},
     "Null dereference racing i8042 port start/stop against the interrupt handler."},
    {"CVE-2017-17807", "Priv", {"construct_key_and_link", "construct_get_dest_keyring"},
     "Omitted write-permission check when request_key links a key into the default keyring."},
    {"CVE-2017-17806", "DoS", {"hmac_create", "shash_no_setkey"},
     "HMAC accepts an underlying hash that requires a key, corrupting kernel stack state."},
    {"CVE-2017-17053", "DoS", {"init_new_context"},
     "Use-after-free from the x86 LDT setup error path in a new mm context."},
    {"CVE-2017-17052", "DoS", {"mm_init"},
     "Use-after-free because a new mm does not clear ->exe_file before the dup path fails."},
    {"CVE-2017-15129", "DoS", {"get_net_ns_by_id"},
     "Use-after-free from a missing refcount check when resolving a net namespace by id."},
    {"CVE-2017-2618", "DoS", {"selinux_setprocattr"},
     "Off-by-one in the SELinux attribute write path crashes the kernel."},
    {"CVE-2016-0723", "DoS", {"tty_ioctl"},
     "Use-after-free race between TIOCGETD ioctl and line discipline changes."},
    {"CVE-2015-8709", "Priv", {"ptrace_has_cap", "__ptrace_may_access"},
     "Privilege escalation via a crafted user namespace entered through the ptrace capability check."},
    {"CVE-2015-5327", "DoS", {"x509_decode_time"},
     "Out-of-bounds read parsing crafted time fields in X.509 certificates."},
};

// Per-run NEW coverage; everything introduced earlier may repeat later.
// Coverage saturates at run 10; runs 11..15 add nothing.
const std::map<int, std::vector<std::pair<const char*, std::vector<int>>>> kRunPlan = {
    {1,
     {{"sys_read", {0, 1, 2, 3}},
      {"sys_write", {0, 1, 2}},
      {"sys_open", {0, 1}},
      {"mm_init", {0, 1, 2, 3, 4, 5}},
      {"tty_ioctl", {0, 1, 2, 3}}}},
    {2, {{"sys_close", {0, 1}}, {"tty_ioctl", {4, 5, 6, 7}}, {"futex_requeue", {0, 1, 2}}}},
    {3, {{"futex_requeue", {3, 4, 5}}, {"init_new_context", {0, 1, 2, 3}}}},
    {4, {{"__ptrace_may_access", {0, 1, 2, 3, 4, 5}}, {"ptrace_has_cap", {0}}}},
    {5, {{"ptrace_has_cap", {1}}}},
    {6, {{"sys_mmap", {0, 1, 2}}}},
    {7, {{"sys_mmap", {3, 4}}, {"sys_read", {4, 5}}}},
    {8, {{"sys_write", {3, 4, 5}}}},
    {9, {{"sys_open", {2, 3, 4}}, {"sys_futex", {0, 1}}}},
    {10, {{"sys_futex", {2, 3}}, {"sys_close", {2}}}},
};

struct Layout {
    std::vector<Symbol> symbols;
    std::vector<BasicBlock> blocks;
    std::map<std::string, std::vector<ByteRange>> blocks_by_symbol;
    uint64_t first_gap_addr = 0; // a padding address between symbols
};

Layout plan_layout() {
    Layout layout;
    uint64_t cursor = kBaseVaddr + kSymbolGap;
    for (const auto& plan : kSymbols) {
        Symbol sym{plan.name, cursor, plan.size};
        layout.symbols.push_back(sym);

        uint64_t covered = plan.tiled ? plan.size : plan.size - plan.size / 8;
        uint64_t base_len = covered / plan.block_count;
        uint64_t rem = covered % plan.block_count;
        uint64_t bcur = cursor;
        for (int i = 0; i < plan.block_count; i++) {
            uint64_t len = base_len + (uint64_t(i) < rem ? 1 : 0);
            layout.blocks.push_back(BasicBlock{bcur, len, plan.name});
            layout.blocks_by_symbol[plan.name].push_back({bcur, len});
            bcur += len;
        }
        cursor += plan.size + kSymbolGap;
        if (layout.first_gap_addr == 0) layout.first_gap_addr = sym.end() + 8;
    }
    if (cursor - kBaseVaddr > kTextSize) {
        std::cerr << "layout overflows text\n";
        std::exit(1);
    }
    return layout;
}

std::vector<uint8_t> make_text() {
    // The sim distinguishes masked from live bytes by the trap value alone,
    // so the source text must not contain it.
    SplitRng rng(0x746f796b65726e31ull);
    std::vector<uint8_t> text(kTextSize);
    for (auto& b : text) {
        b = uint8_t(rng.next() & 0xff);
        if (b == 0xCC) b = 0x90;
    }
    return text;
}

void write_traces(const fs::path& dir, const Layout& layout) {
    fs::create_directories(dir);

    std::vector<std::pair<const char*, int>> cumulative; // (symbol, block idx)
    for (int run = 1; run <= 15; run++) {
        std::vector<std::pair<const char*, int>> fresh;
        auto it = kRunPlan.find(run);
        if (it != kRunPlan.end())
            for (const auto& [sym, idxs] : it->second)
                for (int i : idxs) fresh.emplace_back(sym, i);

        std::ostringstream out;
        out << "# httpd trace, run " << run << "\n";
        // Boot-time noise: excluded by the start marker.
        out << "E " << format_hex(layout.blocks_by_symbol.at("compat_get_timex")[0].start) << "\n";
        out << "E " << format_hex(layout.blocks_by_symbol.at("x509_decode_time")[0].start) << "\n";
        out << "M start\n";

        std::vector<uint64_t> pcs;
        for (const auto& [sym, idx] : fresh) {
            pcs.push_back(layout.blocks_by_symbol.at(sym)[size_t(idx)].start);
            pcs.push_back(layout.blocks_by_symbol.at(sym)[size_t(idx)].start); // hot blocks repeat
        }
        for (size_t i = 0; i < cumulative.size(); i += 3) {
            const auto& [sym, idx] = cumulative[i];
            pcs.push_back(layout.blocks_by_symbol.at(sym)[size_t(idx)].start);
        }
        SplitRng rng(0x72756e00ull + uint64_t(run));
        for (size_t i = pcs.size(); i > 1; i--) std::swap(pcs[i - 1], pcs[rng.below(i)]);
        for (uint64_t pc : pcs) out << "E " << format_hex(pc) << "\n";
        // One pc in inter-symbol padding: resolves to no block, feeds the
        // unresolved-pc diagnostics.
        out << "E " << format_hex(layout.first_gap_addr) << "\n";
        out << "M end\n";
        // Shutdown noise: excluded by the end marker.
        out << "E " << format_hex(layout.blocks_by_symbol.at("key_alloc")[0].start) << "\n";

        char name[32];
        std::snprintf(name, sizeof(name), "httpd-run%02d.trace", run);
        write_text_file(dir / name, out.str());

        for (const auto& f : fresh) cumulative.push_back(f);
    }

    // Tag/noise demo used by the docs and the profiler tests.
    std::ostringstream demo;
    demo << "# mixed-tag trace: httpd payload, cron noise, one untagged event\n";
    demo << "E " << format_hex(layout.blocks_by_symbol.at("key_alloc")[0].start) << " cron\n";
    demo << "M start\n";
    demo << "E " << format_hex(layout.blocks_by_symbol.at("sys_read")[0].start) << " httpd\n";
    demo << "E " << format_hex(layout.blocks_by_symbol.at("compat_get_timex")[0].start) << " cron\n";
    demo << "E " << format_hex(layout.blocks_by_symbol.at("sys_write")[0].start) << " httpd\n";
    demo << "E " << format_hex(layout.blocks_by_symbol.at("sys_open")[0].start) << "\n";
    demo << "M end\n";
    write_text_file(dir / "tagged-demo.trace", demo.str());
}

void write_scenario(const fs::path& dir, const Layout& layout) {
    fs::create_directories(dir);
    auto entry = [&](const char* sym) {
        return format_hex(layout.blocks_by_symbol.at(sym)[0].start);
    };
    std::ostringstream out;
    out << "# httpd launch, interrupts, shared data, one trap on masked code\n";
    out << R"({"op":"execve","app":"httpd"})" << "\n";
    out << R"({"op":"switch","pid":1})" << "\n";
    out << R"({"op":"exec","vaddr":")" << entry("sys_read") << R"("})" << "\n";
    out << R"({"op":"write","key":"shared_fn","value":")" << entry("tty_ioctl") << R"("})" << "\n";
    out << R"({"op":"irq","irq":"timer"})" << "\n";
    out << R"({"op":"irq","irq":"net_rx"})" << "\n";
    out << R"({"op":"ksoftirqd"})" << "\n";
    out << R"({"op":"read","key":"shared_fn"})" << "\n";
    out << R"({"op":"exec","vaddr":")" << entry("compat_get_timex") << R"("})" << "\n";
    out << R"({"op":"teardown","pid":1})" << "\n";
    write_text_file(dir / "demo.jsonl", out.str());
}

} // namespace

int main(int argc, char** argv) {
    fs::path root = argc > 1 ? argv[1] : "fixtures";

    Layout layout = plan_layout();

    std::map<std::string, std::string> syscalls;
    for (const auto& [name, sym] : kSyscalls) syscalls[name] = sym;
    std::vector<KernelImage::CallEdge> edges;
    for (const auto& [from, to] : kCallGraph) edges.emplace_back(from, to);

    KernelImage image = KernelImage::from_parts(
        kBaseVaddr, make_text(), layout.symbols, layout.blocks, syscalls, edges,
        {"handle_timer_irq", "handle_net_rx_irq"}, kPageSize);

    fs::path bundle = root / "toy-kernel";
    image.save(bundle);
    write_text_file(bundle / "irqmap.tsv",
                    "# irq\ttop_half\tbottom_half\n"
                    "timer\thandle_timer_irq\trun_timer_softirq\n"
                    "net_rx\thandle_net_rx_irq\tnet_rx_action\n");

    write_traces(root / "traces", layout);

    fs::create_directories(root / "syscalls");
    write_text_file(root / "syscalls" / "httpd.txt",
                    "# syscalls observed for the httpd workload\n"
                    "read\nwrite\nopen\nclose\nmmap\nfutex\n");

    nlohmann::json cves = nlohmann::json::array();
    for (const auto& cve : kCves) {
        nlohmann::json rec;
        rec["id"] = cve.id;
        rec["effect"] = cve.effect;
        rec["functions"] = cve.functions;
        rec["description"] = cve.description;
        cves.push_back(rec);
    }
    write_text_file(root / "cves.json", cves.dump(2) + "\n");

    write_scenario(root / "scenarios", layout);

    std::cout << "fixtures written to " << root.string() << "\n";
    return 0;
}
