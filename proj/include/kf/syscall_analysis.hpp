#pragma once

#include "kf/image.hpp"
#include "kf/profile.hpp"

#include <filesystem>
#include <set>
#include <string>

namespace kf {

struct SyscallList {
    std::string app_name;
    std::set<std::string> syscalls;
};

/// Symbols reachable from a set of syscall entry points via the static call
/// graph. roots ⊆ reached always (reflexive-transitive closure).
struct ReachabilitySet {
    std::set<std::string> roots;
    std::set<std::string> reached;
};

/// One syscall name per line, '#' comments and blank lines ignored.
SyscallList load_syscall_list(const std::filesystem::path& p, const std::string& app_name);

/// Reflexive-transitive closure over the image call graph starting at the
/// entry symbols of the listed syscalls. Throws UnknownSyscall naming every
/// list member missing from the image's syscall table.
ReachabilitySet closure(const KernelImage& image, const SyscallList& syscalls);

/// Syscalls the image knows about that the list does not mention; the CLI
/// surfaces these so operators can judge trace coverage.
std::set<std::string> syscalls_not_listed(const KernelImage& image, const SyscallList& syscalls);

/// Widens a symbol-granularity profile with the full extents of every
/// reached symbol; the result is syscall-granular and never smaller.
KernelProfile expand_profile(const KernelProfile& profile, const ReachabilitySet& closure,
                             const KernelImage& image);

/// Fraction of the text taken by symbols reachable from every syscall entry.
double syscall_text_fraction(const KernelImage& image);

std::string reachability_to_json(const ReachabilitySet& rs);

} // namespace kf
