#pragma once

#include <stdexcept>
#include <string>

namespace maskaudit {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Mask algebra over masks of different sizes, or a frame/mask size clash.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// IoU of two empty masks is undefined; signals a corrupt sample.
class BothEmpty : public Error {
public:
    using Error::Error;
};

class EmptyMask : public Error {
public:
    using Error::Error;
};

class EmptyGroundTruth : public Error {
public:
    using Error::Error;
};

// Object too small for single-pixel IoU tuning to land inside the interval.
class DegenerateObject : public Error {
public:
    using Error::Error;
};

// Fine-tuning ran out of flippable pixels or hit its iteration cap.
class UnreachableTarget : public Error {
public:
    using Error::Error;
};

class OverlapViolation : public Error {
public:
    using Error::Error;
};

class UnreadableMask : public Error {
public:
    using Error::Error;
};

class UnsupportedDepth : public Error {
public:
    using Error::Error;
};

class UnscoredSample : public Error {
public:
    using Error::Error;
};

class EmptyVideo : public Error {
public:
    using Error::Error;
};

} // namespace maskaudit
