#pragma once

#include "kf/profile.hpp"
#include "kf/sim.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <string>

namespace kf::sim {

/// Scripted event stream, one JSON object per line:
///   {"op":"execve","app":NAME}            profile looked up by app name
///   {"op":"switch","pid":N}
///   {"op":"exec","vaddr":"0x..."}         number or hex string
///   {"op":"irq","irq":NAME}
///   {"op":"ksoftirqd"}
///   {"op":"write","key":K,"value":V}
///   {"op":"read","key":K}
///   {"op":"teardown","pid":N}
/// Pids are assigned sequentially from 1 in execve order; ksoftirqd is 0.
/// Lines starting with '#' and blank lines are skipped.
/// Throws MalformedScenario with the line number on bad input; domain
/// errors from the simulator propagate unchanged.
void run_scenario(Simulator& sim, std::istream& script,
                  const std::map<std::string, KernelProfile>& profiles);

/// Event log as JSON lines, mirrored from Simulator::event_log().
void write_event_log(const Simulator& sim, std::ostream& out);

} // namespace kf::sim
