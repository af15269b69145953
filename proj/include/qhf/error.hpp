#ifndef QHF_ERROR_HPP
#define QHF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace qhf {

/// Failure classes; the CLI maps each to a distinct exit code.
enum class ErrorKind { Config, Mesh, Numeric, Convergence, Io };

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Mesh: return "mesh";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what)
        , kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

} // namespace qhf

#endif // QHF_ERROR_HPP
