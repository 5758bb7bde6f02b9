#pragma once

#include <stdexcept>
#include <string>

namespace consplat {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class AttachmentError : public Error {
public:
    using Error::Error;
};

// Maps, targets or predictor outputs not aligned with the camera set.
class AlignmentError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class DegenerateScheduleError : public Error {
public:
    using Error::Error;
};

// Parse failure with the byte offset (or line) where it happened.
class ParseError : public Error {
public:
    ParseError(const std::string &what, std::size_t position)
        : Error(what + " (at " + std::to_string(position) + ")"), mPosition(position) {}

    std::size_t position() const noexcept { return mPosition; }

private:
    std::size_t mPosition;
};

class PipelineError : public Error {
public:
    PipelineError(const std::string &stage, int timestep, const std::string &what)
        : Error(stage + " failed at t=" + std::to_string(timestep) + ": " + what),
          mStage(stage), mTimestep(timestep) {}

    const std::string &stage() const noexcept { return mStage; }
    int timestep() const noexcept { return mTimestep; }

private:
    std::string mStage;
    int mTimestep;
};

// Transport and protocol errors raised by the remote editor client.
class RemoteError : public Error {
public:
    RemoteError(const std::string &what, std::string requestId, bool retryable)
        : Error(what + (requestId.empty() ? "" : " [request " + requestId + "]")),
          mRequestId(std::move(requestId)), mRetryable(retryable) {}

    const std::string &requestId() const noexcept { return mRequestId; }
    bool retryable() const noexcept { return mRetryable; }

private:
    std::string mRequestId;
    bool mRetryable;
};

class ConnectionError : public RemoteError {
public:
    ConnectionError(const std::string &what, std::string requestId)
        : RemoteError(what, std::move(requestId), true) {}
};

class TimeoutError : public RemoteError {
public:
    TimeoutError(const std::string &what, std::string requestId)
        : RemoteError(what, std::move(requestId), true) {}
};

class ProtocolError : public RemoteError {
public:
    ProtocolError(const std::string &what, std::string field, std::string requestId = {})
        : RemoteError(what + " (field '" + field + "')", std::move(requestId), false),
          mMessage(what), mField(std::move(field)) {}

    const std::string &message() const noexcept { return mMessage; }
    const std::string &field() const noexcept { return mField; }

private:
    std::string mMessage;
    std::string mField;
};

} // namespace consplat
