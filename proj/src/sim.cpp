#include "kf/sim.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kf::sim {

const char* proc_state_name(ProcState s) {
    switch (s) {
    case ProcState::Runnable: return "runnable";
    case ProcState::Running: return "running";
    case ProcState::Killed: return "killed";
    }
    return "runnable";
}

PageTable PageTable::identity(RegionId region, uint64_t page_count) {
    PageTable pt;
    pt.region_ = region;
    pt.entries_.resize(page_count);
    for (uint64_t p = 0; p < page_count; p++) pt.entries_[p] = {region, p};
    return pt;
}

const PageTableEntry& PageTable::entry(uint64_t page) const {
    if (page >= entries_.size())
        raise(Errc::AddressOutOfRange, "page " + std::to_string(page) + " is not mapped");
    return entries_[page];
}

std::map<std::string, IrqHandlers> load_irq_map(const std::filesystem::path& bundle_dir,
                                                const KernelImage& image) {
    std::map<std::string, IrqHandlers> out;
    auto path = bundle_dir / "irqmap.tsv";
    if (!std::filesystem::exists(path)) return out; // no irqs wired for this bundle

    std::istringstream in(read_text_file(path));
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_ws(line);
        if (fields.size() != 3)
            raise(Errc::MalformedBundle,
                  "irqmap.tsv:" + std::to_string(lineno) + ": expected 'irq top_half bottom_half'");
        if (!image.top_half_handlers().count(fields[1]))
            raise(Errc::MalformedBundle, "irqmap.tsv: top half '" + fields[1] +
                                             "' for irq '" + fields[0] + "' is not whitelisted");
        if (!image.find_symbol(fields[2]))
            raise(Errc::MalformedBundle,
                  "irqmap.tsv: bottom half '" + fields[2] + "' is not a symbol");
        out[fields[0]] = IrqHandlers{fields[1], fields[2]};
    }
    return out;
}

nlohmann::json Event::to_json() const {
    nlohmann::json j = fields;
    j["step"] = step;
    j["event"] = kind;
    return j;
}

Simulator::Simulator(std::shared_ptr<const KernelImage> image, SimConfig config)
    : image_(std::move(image)), config_(std::move(config)) {
    if (config_.per_kernel_mb == 0)
        raise(Errc::OutOfRange, "per-kernel memory must be > 0 MB");

    PhysRegion base;
    base.id = kBaseRegion;
    base.bytes = image_->text();
    base.owner = "base";
    regions_.emplace(kBaseRegion, std::move(base));

    Process ksoftirqd;
    ksoftirqd.pid = kKsoftirqdPid;
    ksoftirqd.name = "ksoftirqd";
    ksoftirqd.page_table = PageTable::identity(kBaseRegion, image_->page_count());
    processes_.emplace(kKsoftirqdPid, std::move(ksoftirqd));

    log("Boot", {{"pages", image_->page_count()},
                 {"text_bytes", image_->text_size()},
                 {"base_region", kBaseRegion}});
}

void Simulator::log(std::string kind, nlohmann::json fields) {
    events_.push_back(Event{clock_, std::move(kind), std::move(fields)});
}

Pid Simulator::execve(const std::string& app_name, const KernelProfile& profile) {
    try {
        profile.check_within(*image_);
    } catch (const Error& e) {
        raise(Errc::InvalidProfile, app_name + ": " + e.what());
    }

    // Hard ceiling: a copy that cannot fit in RAM at all. Pressure (soft
    // threshold) is reported by memory_pressure(), not enforced here.
    uint64_t committed = uint64_t(regions_.size()) * config_.per_kernel_mb;
    if (committed + config_.per_kernel_mb > config_.ram_mb)
        raise(Errc::MemoryExhausted,
              "no room for another " + std::to_string(config_.per_kernel_mb) + "MB kernel copy");

    // Force-include the interrupt whitelist, then mask.
    IntervalSet coverage = profile.coverage();
    for (const auto& name : image_->top_half_handlers())
        coverage.insert(image_->find_symbol(name)->extent());

    PhysRegion region;
    region.id = next_region_++;
    region.owner = app_name;
    region.bytes = mask_text(*image_, coverage);

    Process proc;
    proc.pid = next_pid_++;
    proc.name = app_name;
    proc.page_table = PageTable::identity(region.id, image_->page_count());

    ReductionStats stats = reduction_stats(*image_, coverage);

    RegionId rid = region.id;
    Pid pid = proc.pid;
    regions_.emplace(rid, std::move(region));
    processes_.emplace(pid, std::move(proc));

    clock_ += config_.launch_cost_steps;
    log("Launch", {{"pid", pid},
                   {"app", app_name},
                   {"region", rid},
                   {"cost_steps", config_.launch_cost_steps},
                   {"stats",
                    {{"text_reduced_pct", stats.text_reduced_pct},
                     {"symbols_fully_removed_pct", stats.symbols_fully_removed_pct},
                     {"symbols_touched_pct", stats.symbols_touched_pct}}}});
    return pid;
}

Process& Simulator::process_mut(Pid pid) {
    auto it = processes_.find(pid);
    if (it == processes_.end()) raise(Errc::UnknownPid, "pid " + std::to_string(pid));
    return it->second;
}

const Process& Simulator::process(Pid pid) const {
    auto it = processes_.find(pid);
    if (it == processes_.end()) raise(Errc::UnknownPid, "pid " + std::to_string(pid));
    return it->second;
}

const PhysRegion& Simulator::region(RegionId id) const {
    auto it = regions_.find(id);
    if (it == regions_.end()) raise(Errc::OutOfRange, "region " + std::to_string(id) + " is not live");
    return it->second;
}

void Simulator::switch_locked(Pid pid) {
    Process& next = process_mut(pid);
    if (next.state == ProcState::Killed)
        raise(Errc::ProcessKilled, "pid " + std::to_string(pid) + " is killed");
    if (current_ && *current_ != pid) {
        Process& old = process_mut(*current_);
        if (old.state == ProcState::Running) old.state = ProcState::Runnable;
    }
    current_ = pid;
    next.state = ProcState::Running;
}

void Simulator::context_switch(Pid pid) {
    std::optional<Pid> from = current_;
    switch_locked(pid);
    clock_ += 1;
    log("Switch", {{"from", from ? nlohmann::json(*from) : nlohmann::json()}, {"to", pid}});
}

Translation Simulator::translate(Pid pid, uint64_t vaddr) const {
    if (!image_->in_text(vaddr))
        raise(Errc::AddressOutOfRange, format_hex(vaddr) + " is outside the kernel text range");
    const Process& proc = process(pid);
    uint64_t page = (vaddr - image_->base_vaddr()) / image_->page_size();
    const PageTableEntry& pte = proc.page_table.entry(page);
    uint64_t offset = pte.page * image_->page_size() + (vaddr - image_->base_vaddr()) % image_->page_size();
    return Translation{pte.region, offset};
}

uint8_t Simulator::view_byte(Pid pid, uint64_t vaddr) const {
    Translation t = translate(pid, vaddr);
    return region(t.region).bytes.at(t.offset);
}

ExecOutcome Simulator::exec_at(uint64_t vaddr) {
    if (!current_) raise(Errc::NoRunningProcess, "no process is running");
    Pid pid = *current_;
    Translation t = translate(pid, vaddr);
    uint8_t byte = region(t.region).bytes.at(t.offset);

    ExecOutcome out;
    out.byte = byte;
    out.region = t.region;
    if (const Symbol* sym = image_->symbol_at(vaddr)) out.symbol = sym->name;
    out.trapped = (byte == kTrapByte);

    log("Exec", {{"pid", pid},
                 {"vaddr", format_hex(vaddr)},
                 {"outcome", out.trapped ? "trapped" : "executed"},
                 {"symbol", out.symbol ? nlohmann::json(*out.symbol) : nlohmann::json()},
                 {"region", t.region}});

    if (out.trapped) {
        bool kill = config_.fault_policy == FaultPolicy::Kill;
        log("Fault", {{"pid", pid},
                      {"vaddr", format_hex(vaddr)},
                      {"symbol", out.symbol ? nlohmann::json(*out.symbol) : nlohmann::json()},
                      {"policy", kill ? "kill" : "report"},
                      {"killed", kill}});
        if (kill) {
            process_mut(pid).state = ProcState::Killed;
            current_.reset();
        }
    }
    return out;
}

ExecOutcome Simulator::exec_kernel_addr(uint64_t vaddr) {
    clock_ += 1;
    return exec_at(vaddr);
}

void Simulator::raise_interrupt(const std::string& irq) {
    if (!current_) raise(Errc::NoRunningProcess, "an interrupt needs a running process");
    auto it = config_.irq_map.find(irq);
    if (it == config_.irq_map.end()) raise(Errc::UnknownIrq, "irq '" + irq + "' is not mapped");

    clock_ += 1;
    const Symbol* top = image_->find_symbol(it->second.top_half);
    Pid pid = *current_;
    // Top half runs under the interrupted process's own view. Whitelist
    // force-inclusion at launch guarantees this does not trap.
    ExecOutcome out = exec_at(top->start);
    softirq_queue_.emplace_back(irq, clock_);
    log("TopHalf", {{"pid", pid},
                    {"irq", irq},
                    {"symbol", top->name},
                    {"trapped", out.trapped},
                    {"queue_depth", softirq_queue_.size()}});
}

size_t Simulator::run_ksoftirqd() {
    clock_ += 1;
    std::optional<Pid> prev = current_;

    switch_locked(kKsoftirqdPid);
    log("Switch", {{"from", prev ? nlohmann::json(*prev) : nlohmann::json()}, {"to", kKsoftirqdPid}});

    // Drain a snapshot; softirqs raised during the drain wait for the next run.
    std::deque<std::pair<std::string, uint64_t>> snapshot;
    snapshot.swap(softirq_queue_);

    size_t drained = 0;
    for (const auto& [irq, enqueued_step] : snapshot) {
        const IrqHandlers& handlers = config_.irq_map.at(irq);
        const Symbol* bottom = image_->find_symbol(handlers.bottom_half);
        ExecOutcome out = exec_at(bottom->start);
        log("BottomHalf", {{"irq", irq},
                           {"symbol", bottom->name},
                           {"pid", kKsoftirqdPid},
                           {"region", out.region},
                           {"enqueued_step", enqueued_step}});
        drained++;
    }

    if (prev && *prev != kKsoftirqdPid) {
        switch_locked(*prev);
        log("Switch", {{"from", kKsoftirqdPid}, {"to", *prev}});
    } else if (!prev) {
        process_mut(kKsoftirqdPid).state = ProcState::Runnable;
        current_.reset();
    }
    log("KsoftirqdRun", {{"drained", drained}});
    return drained;
}

void Simulator::shared_write(const std::string& key, nlohmann::json value) {
    if (!current_) raise(Errc::NoRunningProcess, "shared data needs a running process");
    clock_ += 1;
    shared_data_[key] = std::move(value);
    log("Write", {{"pid", *current_}, {"key", key}, {"value", shared_data_[key]}});
}

const nlohmann::json& Simulator::shared_read(const std::string& key) {
    if (!current_) raise(Errc::NoRunningProcess, "shared data needs a running process");
    auto it = shared_data_.find(key);
    if (it == shared_data_.end()) raise(Errc::KeyMissing, "key '" + key + "' was never written");
    clock_ += 1;
    log("Read", {{"pid", *current_}, {"key", key}, {"value", it->second}});
    return it->second;
}

MemoryPressure Simulator::memory_pressure() const {
    MemoryPressure mp;
    mp.committed_mb = uint64_t(regions_.size()) * config_.per_kernel_mb;
    uint64_t available = config_.ram_mb > config_.baseline_reserved_mb
                             ? config_.ram_mb - config_.baseline_reserved_mb
                             : 0;
    mp.max_kernels = available / config_.per_kernel_mb;
    mp.pressured = regions_.size() > mp.max_kernels;
    return mp;
}

void Simulator::teardown(Pid pid) {
    if (pid == kKsoftirqdPid)
        raise(Errc::InvalidProfile, "ksoftirqd is permanent and cannot be torn down");
    Process& proc = process_mut(pid);
    RegionId rid = proc.page_table.region();
    processes_.erase(pid);
    if (current_ && *current_ == pid) current_.reset();

    bool referenced = false;
    for (const auto& [other_pid, other] : processes_)
        if (other.page_table.region() == rid) referenced = true;
    bool freed = false;
    if (!referenced && rid != kBaseRegion) {
        regions_.erase(rid);
        freed = true;
    }
    clock_ += 1;
    log("Teardown", {{"pid", pid}, {"region", rid}, {"region_freed", freed}});
}

void Simulator::insert_module(const std::string& name) {
    if (!current_) raise(Errc::NoRunningProcess, "module insertion needs a running process");
    clock_ += 1;
    if (*current_ != kKsoftirqdPid)
        raise(Errc::ModuleInsertForbidden,
              "process " + std::to_string(*current_) + " runs a specialized kernel; insert from the base kernel");
    log("ModuleInsert", {{"name", name}});
}

} // namespace kf::sim
