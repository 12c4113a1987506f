#pragma once

#include <stdexcept>
#include <string>

namespace reprompt {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error
{
public:
    using Error::Error;
};

/// Raised by corrupt_to_dice when the requested Dice cannot be reached.
class InfeasibleTarget : public Error
{
public:
    InfeasibleTarget(const std::string& what, double best_dice)
        : Error(what), best_dice_(best_dice)
    {
    }

    double best_dice() const noexcept { return best_dice_; }

private:
    double best_dice_;
};

/// A CLI command needs an artifact that an upstream command produces.
class MissingArtifact : public Error
{
public:
    MissingArtifact(const std::string& path, const std::string& producer)
        : Error("missing artifact " + path + " (run `" + producer + "` first)"),
          path_(path), producer_(producer)
    {
    }

    const std::string& path() const noexcept { return path_; }
    const std::string& producer() const noexcept { return producer_; }

private:
    std::string path_;
    std::string producer_;
};

} // namespace reprompt
