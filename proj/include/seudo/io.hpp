#pragma once

// Frame ingestion (raw float stream, uncompressed grayscale TIFF) and
// persistence of profiles, traces and events.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seudo/engine.hpp"

namespace seudo {

// Thrown for malformed or unsupported input; distinct from runtime failures.
class FormatError : public Error
{
public:
	using Error::Error;
};

enum class VideoFormat
{
	raw_f32,
	tiff_gray,
};

VideoFormat parse_video_format(const std::string &name);

// Raw layout: "SDV1", then width, height and frame count as little-endian
// u32, then frames of width*height little-endian f32, row-major.
constexpr char raw_magic[4] = {'S', 'D', 'V', '1'};

class FrameSource
{
public:
	virtual ~FrameSource() = default;
	virtual FrameGeometry geometry() const = 0;
	// Next frame, or nothing at the end of the stream.
	virtual std::optional<Image> next() = 0;
	// Frame count announced by the container, if any.
	virtual std::optional<std::uint32_t> declared_frames() const = 0;
	// Non-fatal problems, such as a truncated final frame.
	const std::vector<std::string> &warnings() const { return warnings_; }

protected:
	std::vector<std::string> warnings_;
};

// Reads frames one at a time from the stream; nothing beyond the current
// frame is buffered.
class RawSource : public FrameSource
{
public:
	explicit RawSource(std::istream &in);
	FrameGeometry geometry() const override { return geometry_; }
	std::optional<Image> next() override;
	std::optional<std::uint32_t> declared_frames() const override { return frames_; }

private:
	std::istream &in_;
	FrameGeometry geometry_;
	std::uint32_t frames_ = 0;
	std::uint32_t read_ = 0;
	std::vector<char> buf_;
};

// Multi-page baseline TIFF, one single-channel uncompressed 8- or 16-bit
// unsigned page per frame, values kept as is. Needs a seekable stream.
class TiffSource : public FrameSource
{
public:
	explicit TiffSource(std::istream &in);
	FrameGeometry geometry() const override { return geometry_; }
	std::optional<Image> next() override;
	std::optional<std::uint32_t> declared_frames() const override { return std::nullopt; }

private:
	std::uint16_t u16(const unsigned char *p) const;
	std::uint32_t u32(const unsigned char *p) const;
	std::optional<Image> read_page(std::uint64_t offset, bool first);

	std::istream &in_;
	bool little_ = true;
	std::uint64_t next_ifd_ = 0;
	FrameGeometry geometry_;
	std::optional<Image> pending_;
	int pages_ = 0;
};

// Opens a file, or standard input for "-".
class VideoInput
{
public:
	VideoInput(const std::string &path, VideoFormat format);
	FrameSource &source() { return *source_; }

private:
	std::unique_ptr<std::ifstream> file_;
	std::unique_ptr<FrameSource> source_;
};

void write_raw_header(std::ostream &out, FrameGeometry geometry, std::uint32_t frames);
void write_raw_frame(std::ostream &out, const std::vector<float> &pixels);
void write_raw_video(const std::string &path, FrameGeometry geometry, const std::vector<std::vector<float>> &frames);

// Persisted tables. Every file starts with a versioned header line.
constexpr int persist_version = 1;

std::string profiles_csv(const std::vector<GlobalProfile> &profiles);
// Rows are frames; columns are profile ids in ascending order.
std::string traces_csv(const std::map<ProfileId, std::vector<double>> &traces, std::size_t frames);
std::string event_json_line(const DetectionEvent &event);
std::string events_header_line();

std::map<ProfileId, Footprint> parse_profiles_csv(const std::string &text);
std::map<ProfileId, std::vector<double>> parse_traces_csv(const std::string &text, std::size_t *frames = nullptr);
std::vector<DetectionEvent> parse_events_jsonl(const std::string &text);

// Writes events as they arrive, one line each, flushed per frame.
class EventWriter
{
public:
	explicit EventWriter(const std::string &path);
	void write(const std::vector<DetectionEvent> &events);

private:
	std::string path_;
	std::ofstream out_;
};

// profiles.csv, traces.csv and config.json in dir; the directory is created.
void persist_snapshot(const std::string &dir, const Snapshot &snapshot, const EngineConfig &config);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &text);

} // namespace seudo
