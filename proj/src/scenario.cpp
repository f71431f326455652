#include "kf/scenario.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <json.hpp>

namespace kf::sim {

namespace {

uint64_t vaddr_field(const nlohmann::json& ev, size_t lineno) {
    if (!ev.contains("vaddr"))
        raise(Errc::MalformedScenario, "line " + std::to_string(lineno) + ": missing vaddr");
    const auto& v = ev["vaddr"];
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    if (v.is_string()) {
        auto parsed = parse_hex(v.get<std::string>());
        if (parsed) return *parsed;
    }
    raise(Errc::MalformedScenario, "line " + std::to_string(lineno) + ": bad vaddr");
}

} // namespace

void run_scenario(Simulator& sim, std::istream& script,
                  const std::map<std::string, KernelProfile>& profiles) {
    std::string line;
    size_t lineno = 0;
    while (std::getline(script, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        nlohmann::json ev;
        try {
            ev = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            raise(Errc::MalformedScenario, "line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!ev.is_object() || !ev.contains("op") || !ev["op"].is_string())
            raise(Errc::MalformedScenario, "line " + std::to_string(lineno) + ": missing op");
        std::string op = ev["op"].get<std::string>();

        auto field = [&](const char* name) -> const nlohmann::json& {
            if (!ev.contains(name))
                raise(Errc::MalformedScenario,
                      "line " + std::to_string(lineno) + ": '" + op + "' needs '" + name + "'");
            return ev[name];
        };

        if (op == "execve") {
            std::string app = field("app").get<std::string>();
            auto it = profiles.find(app);
            if (it == profiles.end())
                raise(Errc::InvalidProfile, "no profile registered for app '" + app + "'");
            sim.execve(app, it->second);
        } else if (op == "switch") {
            sim.context_switch(field("pid").get<Pid>());
        } else if (op == "exec") {
            sim.exec_kernel_addr(vaddr_field(ev, lineno));
        } else if (op == "irq") {
            sim.raise_interrupt(field("irq").get<std::string>());
        } else if (op == "ksoftirqd") {
            sim.run_ksoftirqd();
        } else if (op == "write") {
            sim.shared_write(field("key").get<std::string>(), field("value"));
        } else if (op == "read") {
            sim.shared_read(field("key").get<std::string>());
        } else if (op == "teardown") {
            sim.teardown(field("pid").get<Pid>());
        } else {
            raise(Errc::MalformedScenario,
                  "line " + std::to_string(lineno) + ": unknown op '" + op + "'");
        }
    }
}

void write_event_log(const Simulator& sim, std::ostream& out) {
    for (const auto& ev : sim.event_log()) out << ev.to_json().dump() << "\n";
}

} // namespace kf::sim
