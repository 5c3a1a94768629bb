#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lidar_weather
{

// Base of everything the library throws on bad data or arguments.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (shape, range, parameter domain).
class InvalidArgument : public Error
{
  public:
    using Error::Error;
};

// Malformed bytes on disk. Carries the byte offset where decoding failed.
class FormatError : public Error
{
  public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }
    const std::string& detail() const noexcept { return detail_; }

  private:
    std::string detail_;
    std::size_t offset_;
};

// Non-finite loss, gradient, or value crossing a module boundary.
class NumericalError : public Error
{
  public:
    using Error::Error;
};

} // namespace lidar_weather
