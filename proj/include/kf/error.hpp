#pragma once

#include <stdexcept>
#include <string>

namespace kf {

// Every failure the toolkit can report, one kind per contract violation.
enum class Errc {
    MalformedBundle,
    InvariantViolation,
    OutOfRange,
    MalformedTraceLine,
    MalformedScenario,
    GranularityMismatch,
    UnknownSyscall,
    RangeOutOfImage,
    MemoryExhausted,
    InvalidProfile,
    UnknownPid,
    ProcessKilled,
    NoRunningProcess,
    AddressOutOfRange,
    UnknownIrq,
    KeyMissing,
    UnknownFunction,
    LengthMismatch,
    UnsupportedFormat,
    ModuleInsertForbidden,
    IoError,
};

const char* errc_name(Errc c);

// Exit classification: 1 = domain error, 2 = usage or input-file error.
int exit_code_for(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace kf
