#pragma once

#include "kf/image.hpp"
#include "kf/profile.hpp"
#include "kf/specialize.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace kf::sim {

using Pid = uint32_t;
using RegionId = uint32_t;

/// A physical copy of the kernel text. Region 0 is the base kernel: the
/// unmasked template that boots the machine, runs ksoftirqd and serves as
/// the cloning source for every specialized copy.
struct PhysRegion {
    RegionId id = 0;
    std::vector<uint8_t> bytes;
    std::string owner; // app name, or "base"
};

struct PageTableEntry {
    RegionId region = 0;
    uint64_t page = 0;
};

/// Kernel-text page table: one entry per text page. Entries are identity
/// page mappings into a single region, which is what keeps every kernel
/// view at the same virtual layout.
class PageTable {
public:
    static PageTable identity(RegionId region, uint64_t page_count);

    const PageTableEntry& entry(uint64_t page) const;
    RegionId region() const { return region_; }
    uint64_t page_count() const { return entries_.size(); }

private:
    std::vector<PageTableEntry> entries_;
    RegionId region_ = 0;
};

enum class ProcState { Runnable, Running, Killed };

const char* proc_state_name(ProcState s);

struct Process {
    Pid pid = 0;
    std::string name;
    PageTable page_table;
    ProcState state = ProcState::Runnable;
};

enum class FaultPolicy { Kill, ReportOnly };

struct IrqHandlers {
    std::string top_half;    // must be on the image whitelist
    std::string bottom_half; // any symbol; runs under the base kernel only
};

struct SimConfig {
    uint64_t ram_mb = 8192;
    uint64_t per_kernel_mb = 8;
    uint64_t baseline_reserved_mb = 2192;
    uint64_t launch_cost_steps = 3; // charged per clone+mask at execve
    FaultPolicy fault_policy = FaultPolicy::Kill;
    std::map<std::string, IrqHandlers> irq_map;
};

/// irqmap.tsv in the bundle directory: irq_name \t top_half \t bottom_half.
/// Each top half must be a whitelisted handler, each bottom half a symbol.
std::map<std::string, IrqHandlers> load_irq_map(const std::filesystem::path& bundle_dir,
                                                const KernelImage& image);

struct ExecOutcome {
    bool trapped = false;
    std::optional<std::string> symbol; // containing symbol, if any
    uint8_t byte = 0;
    RegionId region = 0;
};

struct MemoryPressure {
    uint64_t committed_mb = 0;
    bool pressured = false;
    uint64_t max_kernels = 0;
};

struct Event {
    uint64_t step = 0;
    std::string kind;
    nlohmann::json fields;

    nlohmann::json to_json() const;
};

struct Translation {
    RegionId region = 0;
    uint64_t offset = 0; // byte offset into the region
};

/// Deterministic single-CPU model of the orchestration runtime: one shared
/// virtual kernel layout, one text copy per launched process, context
/// switches that change nothing but the page-table pointer, trap bytes on
/// out-of-profile code, and softirq deferral to ksoftirqd on the base
/// kernel. One Simulator must not be mutated from two threads; independent
/// instances are unrelated.
///
/// Clock: boot is step 0, execve advances the clock by launch_cost_steps,
/// every other operation advances it by 1.
class Simulator {
public:
    /// Boot: creates the base region from the unmasked text and the
    /// ksoftirqd process (pid 0) on it.
    Simulator(std::shared_ptr<const KernelImage> image, SimConfig config);

    /// Clone-and-mask launch. The top-half whitelist extents are force-
    /// included into the coverage before masking, so any interrupt's first
    /// half is executable under every process. The new process starts
    /// Runnable; schedule it with context_switch.
    /// Throws InvalidProfile, MemoryExhausted.
    Pid execve(const std::string& app_name, const KernelProfile& profile);

    /// Makes pid the Running process. Nothing else changes: no region
    /// bytes, no page tables. Throws UnknownPid, ProcessKilled.
    void context_switch(Pid pid);

    /// Executes one kernel-text address under the current process's view.
    /// A trap byte means the code is not in this process's kernel; the
    /// fault policy then applies (Kill marks the process Killed and clears
    /// the CPU). Throws AddressOutOfRange, NoRunningProcess.
    ExecOutcome exec_kernel_addr(uint64_t vaddr);

    /// Runs the irq's top half under the current view (whitelisted, never
    /// traps) and queues the bottom half. Throws UnknownIrq, NoRunningProcess.
    void raise_interrupt(const std::string& irq);

    /// Switches to ksoftirqd, drains a snapshot of the softirq queue under
    /// the base kernel view, then restores the previous process. Returns
    /// the number of bottom halves executed.
    size_t run_ksoftirqd();

    /// Shared kernel data: one store, no per-process copies. A write by any
    /// process is immediately visible to every other. Read of an absent key
    /// throws KeyMissing. Both require a running process.
    void shared_write(const std::string& key, nlohmann::json value);
    const nlohmann::json& shared_read(const std::string& key);

    MemoryPressure memory_pressure() const;

    /// Removes the process; frees its region when no other process maps it.
    /// ksoftirqd cannot be torn down. Throws UnknownPid.
    void teardown(Pid pid);

    /// Module insertion is permitted only under the base kernel view
    /// (ksoftirqd current); specialized processes get ModuleInsertForbidden.
    void insert_module(const std::string& name);

    // Inspection (tests, scenario driver, reports).
    const KernelImage& image() const { return *image_; }
    const SimConfig& config() const { return config_; }
    uint64_t clock() const { return clock_; }
    std::optional<Pid> current() const { return current_; }
    Pid ksoftirqd_pid() const { return kKsoftirqdPid; }
    RegionId base_region() const { return kBaseRegion; }
    size_t region_count() const { return regions_.size(); }
    size_t process_count() const { return processes_.size(); }
    const PhysRegion& region(RegionId id) const;
    const Process& process(Pid pid) const;
    bool has_process(Pid pid) const { return processes_.count(pid) > 0; }
    const std::deque<std::pair<std::string, uint64_t>>& softirq_queue() const { return softirq_queue_; }
    const std::vector<Event>& event_log() const { return events_; }

    /// Page-table walk for pid at vaddr. Throws AddressOutOfRange.
    Translation translate(Pid pid, uint64_t vaddr) const;

    /// The byte pid would fetch at vaddr. Throws AddressOutOfRange.
    uint8_t view_byte(Pid pid, uint64_t vaddr) const;

    static constexpr Pid kKsoftirqdPid = 0;
    static constexpr RegionId kBaseRegion = 0;

private:
    void switch_locked(Pid pid);
    void log(std::string kind, nlohmann::json fields);
    ExecOutcome exec_at(uint64_t vaddr);
    Process& process_mut(Pid pid);

    std::shared_ptr<const KernelImage> image_;
    SimConfig config_;
    std::map<RegionId, PhysRegion> regions_;
    std::map<Pid, Process> processes_;
    std::optional<Pid> current_;
    std::deque<std::pair<std::string, uint64_t>> softirq_queue_;
    std::map<std::string, nlohmann::json> shared_data_;
    std::vector<Event> events_;
    uint64_t clock_ = 0;
    Pid next_pid_ = 1;
    RegionId next_region_ = 1;
};

} // namespace kf::sim
