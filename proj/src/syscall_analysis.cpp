#include "kf/syscall_analysis.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <json.hpp>

#include <deque>
#include <map>
#include <sstream>

namespace kf {

SyscallList load_syscall_list(const std::filesystem::path& p, const std::string& app_name) {
    SyscallList list;
    list.app_name = app_name;
    std::istringstream in(read_text_file(p));
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_ws(line);
        for (auto& f : fields) list.syscalls.insert(std::move(f));
    }
    return list;
}

namespace {

std::set<std::string> reach_from(const KernelImage& image, const std::set<std::string>& roots) {
    std::map<std::string_view, std::vector<std::string_view>> adj;
    for (const auto& [from, to] : image.call_graph()) adj[from].push_back(to);

    std::set<std::string> reached;
    std::deque<std::string_view> work;
    for (const auto& r : roots)
        if (reached.insert(r).second) work.push_back(reached.find(r)->c_str());
    while (!work.empty()) {
        std::string_view cur = work.front();
        work.pop_front();
        auto it = adj.find(cur);
        if (it == adj.end()) continue;
        for (auto callee : it->second) {
            auto [pos, fresh] = reached.insert(std::string(callee));
            if (fresh) work.push_back(pos->c_str());
        }
    }
    return reached;
}

} // namespace

ReachabilitySet closure(const KernelImage& image, const SyscallList& syscalls) {
    ReachabilitySet out;
    std::vector<std::string> unknown;
    for (const auto& sc : syscalls.syscalls) {
        auto it = image.syscall_entries().find(sc);
        if (it == image.syscall_entries().end()) {
            unknown.push_back(sc);
            continue;
        }
        out.roots.insert(it->second);
    }
    if (!unknown.empty()) {
        std::string names;
        for (const auto& n : unknown) names += (names.empty() ? "" : ", ") + n;
        raise(Errc::UnknownSyscall, "not in the image syscall table: " + names);
    }
    out.reached = reach_from(image, out.roots);
    return out;
}

std::set<std::string> syscalls_not_listed(const KernelImage& image, const SyscallList& syscalls) {
    std::set<std::string> out;
    for (const auto& [name, entry] : image.syscall_entries())
        if (!syscalls.syscalls.count(name)) out.insert(name);
    return out;
}

KernelProfile expand_profile(const KernelProfile& profile, const ReachabilitySet& closure,
                             const KernelImage& image) {
    if (profile.granularity != Granularity::Symbol)
        raise(Errc::GranularityMismatch,
              "expansion requires a symbol-granularity profile (coarsen block profiles first), got " +
                  std::string(granularity_name(profile.granularity)));

    KernelProfile out = profile;
    out.granularity = Granularity::Syscall;
    for (const auto& name : closure.reached) {
        const Symbol* s = image.find_symbol(name);
        if (!s) raise(Errc::UnknownFunction, "closure member '" + name + "' is not a symbol");
        out.ranges.insert(s->extent());
    }
    if (extents_overlap(out.ranges))
        raise(Errc::InvalidProfile, "expanded profile has overlapping ranges");
    return out;
}

double syscall_text_fraction(const KernelImage& image) {
    if (image.text_size() == 0) return 0.0;
    std::set<std::string> roots;
    for (const auto& [name, entry] : image.syscall_entries()) roots.insert(entry);
    auto reached = reach_from(image, roots);
    uint64_t bytes = 0;
    for (const auto& name : reached) bytes += image.find_symbol(name)->size;
    return double(bytes) / double(image.text_size());
}

std::string reachability_to_json(const ReachabilitySet& rs) {
    nlohmann::json doc;
    doc["roots"] = rs.roots;   // std::set serializes sorted
    doc["reached"] = rs.reached;
    return doc.dump(2) + "\n";
}

} // namespace kf
