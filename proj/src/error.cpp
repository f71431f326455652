#include "kf/error.hpp"

namespace kf {

const char* errc_name(Errc c) {
    switch (c) {
    case Errc::MalformedBundle: return "MalformedBundle";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::MalformedTraceLine: return "MalformedTraceLine";
    case Errc::MalformedScenario: return "MalformedScenario";
    case Errc::GranularityMismatch: return "GranularityMismatch";
    case Errc::UnknownSyscall: return "UnknownSyscall";
    case Errc::RangeOutOfImage: return "RangeOutOfImage";
    case Errc::MemoryExhausted: return "MemoryExhausted";
    case Errc::InvalidProfile: return "InvalidProfile";
    case Errc::UnknownPid: return "UnknownPid";
    case Errc::ProcessKilled: return "ProcessKilled";
    case Errc::NoRunningProcess: return "NoRunningProcess";
    case Errc::AddressOutOfRange: return "AddressOutOfRange";
    case Errc::UnknownIrq: return "UnknownIrq";
    case Errc::KeyMissing: return "KeyMissing";
    case Errc::UnknownFunction: return "UnknownFunction";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::ModuleInsertForbidden: return "ModuleInsertForbidden";
    case Errc::IoError: return "IoError";
    }
    return "Error";
}

int exit_code_for(Errc c) {
    switch (c) {
    case Errc::MalformedBundle:
    case Errc::MalformedTraceLine:
    case Errc::MalformedScenario:
    case Errc::UnsupportedFormat:
    case Errc::IoError:
        return 2;
    default:
        return 1;
    }
}

} // namespace kf
