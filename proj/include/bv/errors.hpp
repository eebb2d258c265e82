#ifndef BV_ERRORS_HPP
#define BV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bv {

// Error taxonomy used across the pipeline. Stages catch these to map onto
// exit codes (1 validation, 2 missing input, 3 internal).

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingInput : std::runtime_error {
    explicit MissingInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct PointAtCameraPlane : std::runtime_error {
    PointAtCameraPlane() : std::runtime_error("point projects onto the camera plane (w ~ 0)") {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyGrid : std::runtime_error {
    EmptyGrid() : std::runtime_error("height grid is empty") {}
};

struct NoCoverage : std::runtime_error {
    explicit NoCoverage(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateHeight : std::runtime_error {
    explicit DegenerateHeight(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateConfiguration : std::runtime_error {
    explicit DegenerateConfiguration(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct PatchTooSmall : std::runtime_error {
    explicit PatchTooSmall(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyClass : std::runtime_error {
    explicit EmptyClass(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoVisibleViews : std::runtime_error {
    explicit NoVisibleViews(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingVerdict : std::runtime_error {
    explicit MissingVerdict(const std::string& msg) : std::runtime_error(msg) {}
};

struct UndefinedRatio : std::runtime_error {
    explicit UndefinedRatio(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& msg) : std::runtime_error(msg) {}
};

struct SpecError : std::runtime_error {
    explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bv

#endif
