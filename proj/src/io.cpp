#include "seudo/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace seudo {

VideoFormat parse_video_format(const std::string &name)
{
	if (name == "raw_f32" || name == "raw")
		return VideoFormat::raw_f32;
	if (name == "tiff_gray" || name == "tiff" || name == "tif")
		return VideoFormat::tiff_gray;
	throw FormatError("unknown input format '" + name + "' (expected raw_f32 or tiff_gray)");
}

namespace {

std::uint32_t le32(const unsigned char *p)
{
	return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

void put32(std::ostream &out, std::uint32_t v)
{
	const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
	out.write(b, 4);
}

constexpr std::size_t max_frame_pixels = std::size_t(1) << 28;

} // namespace

RawSource::RawSource(std::istream &in) : in_(in)
{
	unsigned char h[16];
	in_.read(reinterpret_cast<char *>(h), 16);
	if (in_.gcount() != 16)
		throw FormatError("raw input: header shorter than 16 bytes");
	if (std::memcmp(h, raw_magic, 4) != 0)
		throw FormatError("raw input: bad magic (expected SDV1)");
	const std::uint32_t w = le32(h + 4), ht = le32(h + 8);
	frames_ = le32(h + 12);
	if (w == 0 || ht == 0 || std::size_t(w) * ht > max_frame_pixels || w > 1u << 20 || ht > 1u << 20)
		throw FormatError("raw input: bad dimensions " + std::to_string(w) + "x" + std::to_string(ht));
	geometry_ = {int(w), int(ht)};
	buf_.resize(geometry_.pixels() * 4);
}

std::optional<Image> RawSource::next()
{
	if (read_ >= frames_)
		return std::nullopt;
	in_.read(buf_.data(), std::streamsize(buf_.size()));
	const std::size_t got = std::size_t(in_.gcount());
	if (got != buf_.size()) {
		if (got > 0)
			warnings_.push_back("truncated frame " + std::to_string(read_) + ": " + std::to_string(got) + " of " + std::to_string(buf_.size()) + " bytes; stopping after " + std::to_string(read_) + " complete frames");
		else
			warnings_.push_back("stream ended after " + std::to_string(read_) + " of " + std::to_string(frames_) + " declared frames");
		frames_ = read_;
		return std::nullopt;
	}
	Image img(geometry_.width, geometry_.height);
	const auto *p = reinterpret_cast<const unsigned char *>(buf_.data());
	for (std::size_t j = 0; j < img.size(); j++) {
		std::uint32_t bits = le32(p + 4 * j);
		float f;
		std::memcpy(&f, &bits, 4);
		img.pixels[j] = f;
	}
	read_++;
	return img;
}

void write_raw_header(std::ostream &out, FrameGeometry g, std::uint32_t frames)
{
	out.write(raw_magic, 4);
	put32(out, std::uint32_t(g.width));
	put32(out, std::uint32_t(g.height));
	put32(out, frames);
}

void write_raw_frame(std::ostream &out, const std::vector<float> &pixels)
{
	for (float f : pixels) {
		std::uint32_t bits;
		std::memcpy(&bits, &f, 4);
		put32(out, bits);
	}
}

void write_raw_video(const std::string &path, FrameGeometry g, const std::vector<std::vector<float>> &frames)
{
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error("cannot open " + path + " for writing");
	write_raw_header(out, g, std::uint32_t(frames.size()));
	for (const auto &f : frames) {
		if (f.size() != g.pixels())
			throw Error("frame size does not match the geometry");
		write_raw_frame(out, f);
	}
	if (!out.flush())
		throw Error("write failed: " + path);
}

// TIFF.

namespace {

enum : std::uint16_t
{
	tag_width = 256,
	tag_height = 257,
	tag_bits = 258,
	tag_compression = 259,
	tag_photometric = 262,
	tag_strip_offsets = 273,
	tag_samples = 277,
	tag_rows_per_strip = 278,
	tag_strip_bytes = 279,
	tag_planar = 284,
	tag_predictor = 317,
	tag_tile_width = 322,
	tag_tile_offsets = 324,
	tag_sample_format = 339,
};

} // namespace

std::uint16_t TiffSource::u16(const unsigned char *p) const
{
	return little_ ? std::uint16_t(p[0] | p[1] << 8) : std::uint16_t(p[1] | p[0] << 8);
}

std::uint32_t TiffSource::u32(const unsigned char *p) const
{
	if (little_)
		return le32(p);
	return std::uint32_t(p[3]) | std::uint32_t(p[2]) << 8 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[0]) << 24;
}

TiffSource::TiffSource(std::istream &in) : in_(in)
{
	unsigned char h[8];
	in_.read(reinterpret_cast<char *>(h), 8);
	if (in_.gcount() != 8)
		throw FormatError("tiff input: file shorter than its header");
	if (h[0] == 'I' && h[1] == 'I')
		little_ = true;
	else if (h[0] == 'M' && h[1] == 'M')
		little_ = false;
	else
		throw FormatError("tiff input: bad byte-order mark");
	const std::uint16_t version = u16(h + 2);
	if (version == 43)
		throw FormatError("tiff input: unsupported feature: BigTIFF");
	if (version != 42)
		throw FormatError("tiff input: bad magic number");
	pending_ = read_page(u32(h + 4), true);
	if (!pending_)
		throw FormatError("tiff input: no image pages");
}

std::optional<Image> TiffSource::read_page(std::uint64_t offset, bool first)
{
	if (offset == 0)
		return std::nullopt;
	in_.clear();
	in_.seekg(std::streamoff(offset));
	unsigned char cnt[2];
	in_.read(reinterpret_cast<char *>(cnt), 2);
	if (in_.gcount() != 2) {
		warnings_.push_back("tiff input: directory of page " + std::to_string(pages_) + " is truncated; stopping");
		return std::nullopt;
	}
	const std::uint16_t n = u16(cnt);
	std::vector<unsigned char> dir(std::size_t(n) * 12 + 4);
	in_.read(reinterpret_cast<char *>(dir.data()), std::streamsize(dir.size()));
	if (std::size_t(in_.gcount()) != dir.size()) {
		warnings_.push_back("tiff input: directory of page " + std::to_string(pages_) + " is truncated; stopping");
		return std::nullopt;
	}

	std::uint32_t width = 0, height = 0, bits = 1, compression = 1, photometric = 1, samples = 1, rows_per_strip = 0xffffffffu, predictor = 1, sample_format = 1;
	std::vector<std::uint32_t> offsets, counts;
	auto values = [&](const unsigned char *e) {
		const std::uint16_t type = u16(e + 2);
		const std::uint32_t count = u32(e + 4);
		const std::size_t size = type == 3 ? 2 : type == 4 ? 4 : 0;
		if (size == 0)
			throw FormatError("tiff input: unsupported field type " + std::to_string(type) + " for tag " + std::to_string(u16(e)));
		if (count > (1u << 24))
			throw FormatError("tiff input: implausible field count");
		std::vector<unsigned char> raw(size * count);
		if (raw.size() <= 4) {
			std::memcpy(raw.data(), e + 8, raw.size());
		} else {
			auto here = in_.tellg();
			in_.seekg(std::streamoff(u32(e + 8)));
			in_.read(reinterpret_cast<char *>(raw.data()), std::streamsize(raw.size()));
			if (std::size_t(in_.gcount()) != raw.size())
				throw FormatError("tiff input: field data out of range");
			in_.seekg(here);
		}
		std::vector<std::uint32_t> out(count);
		for (std::uint32_t i = 0; i < count; i++)
			out[i] = size == 2 ? u16(raw.data() + 2 * i) : u32(raw.data() + 4 * i);
		return out;
	};
	for (std::uint16_t i = 0; i < n; i++) {
		const unsigned char *e = dir.data() + std::size_t(i) * 12;
		const std::uint16_t tag = u16(e);
		switch (tag) {
		case tag_width: width = values(e).at(0); break;
		case tag_height: height = values(e).at(0); break;
		case tag_bits: bits = values(e).at(0); break;
		case tag_compression: compression = values(e).at(0); break;
		case tag_photometric: photometric = values(e).at(0); break;
		case tag_strip_offsets: offsets = values(e); break;
		case tag_samples: samples = values(e).at(0); break;
		case tag_rows_per_strip: rows_per_strip = values(e).at(0); break;
		case tag_strip_bytes: counts = values(e); break;
		case tag_planar: break;
		case tag_predictor: predictor = values(e).at(0); break;
		case tag_sample_format: sample_format = values(e).at(0); break;
		case tag_tile_width:
		case tag_tile_offsets: throw FormatError("tiff input: unsupported feature: tiled layout");
		default: break;
		}
	}
	next_ifd_ = u32(dir.data() + std::size_t(n) * 12);
	(void)rows_per_strip;

	if (compression != 1)
		throw FormatError("tiff input: unsupported feature: compression " + std::to_string(compression));
	if (samples != 1)
		throw FormatError("tiff input: unsupported feature: " + std::to_string(samples) + " samples per pixel");
	if (photometric != 1)
		throw FormatError("tiff input: unsupported feature: photometric interpretation " + std::to_string(photometric));
	if (bits != 8 && bits != 16)
		throw FormatError("tiff input: unsupported feature: " + std::to_string(bits) + "-bit samples");
	if (sample_format != 1)
		throw FormatError("tiff input: unsupported feature: sample format " + std::to_string(sample_format));
	if (predictor != 1)
		throw FormatError("tiff input: unsupported feature: predictor " + std::to_string(predictor));
	if (width == 0 || height == 0 || std::size_t(width) * height > max_frame_pixels)
		throw FormatError("tiff input: bad dimensions");
	if (offsets.empty() || offsets.size() != counts.size())
		throw FormatError("tiff input: missing or inconsistent strip tables");
	if (first)
		geometry_ = {int(width), int(height)};
	else if (!(geometry_ == FrameGeometry{int(width), int(height)}))
		throw FormatError("tiff input: unsupported feature: pages with differing dimensions");

	const std::size_t bps = bits / 8, need = std::size_t(width) * height * bps;
	std::vector<unsigned char> data;
	data.reserve(need);
	for (std::size_t s = 0; s < offsets.size() && data.size() < need; s++) {
		const std::size_t take = std::min<std::size_t>(counts[s], need - data.size());
		const std::size_t at = data.size();
		data.resize(at + take);
		in_.clear();
		in_.seekg(std::streamoff(offsets[s]));
		in_.read(reinterpret_cast<char *>(data.data() + at), std::streamsize(take));
		if (std::size_t(in_.gcount()) != take) {
			warnings_.push_back("tiff input: page " + std::to_string(pages_) + " is truncated; stopping after " + std::to_string(pages_) + " complete frames");
			next_ifd_ = 0;
			return std::nullopt;
		}
	}
	if (data.size() < need)
		throw FormatError("tiff input: strips hold fewer bytes than the image needs");
	Image img(static_cast<int>(width), static_cast<int>(height));
	for (std::size_t j = 0; j < img.size(); j++)
		img.pixels[j] = bps == 1 ? double(data[j]) : double(u16(data.data() + 2 * j));
	pages_++;
	return img;
}

std::optional<Image> TiffSource::next()
{
	if (pending_) {
		std::optional<Image> out = std::move(pending_);
		pending_.reset();
		return out;
	}
	if (next_ifd_ == 0)
		return std::nullopt;
	return read_page(next_ifd_, false);
}

VideoInput::VideoInput(const std::string &path, VideoFormat format)
{
	std::istream *in = &std::cin;
	if (path != "-") {
		file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
		if (!*file_)
			throw Error("cannot open " + path + ": " + std::strerror(errno));
		in = file_.get();
	}
	if (format == VideoFormat::raw_f32)
		source_ = std::make_unique<RawSource>(*in);
	else {
		if (path == "-")
			throw FormatError("tiff input must be a seekable file, not standard input");
		source_ = std::make_unique<TiffSource>(*in);
	}
}

// Persistence.

namespace {

std::string g17(double v)
{
	char buf[40];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

std::vector<std::string> split(const std::string &line, char sep)
{
	std::vector<std::string> out;
	std::string cur;
	for (char ch : line) {
		if (ch == sep) {
			out.push_back(cur);
			cur.clear();
		} else if (ch != '\r') {
			cur += ch;
		}
	}
	out.push_back(cur);
	return out;
}

double to_double(const std::string &s, const char *what)
{
	char *end = nullptr;
	errno = 0;
	double v = std::strtod(s.c_str(), &end);
	if (s.empty() || *end != '\0' || errno == ERANGE)
		throw FormatError(std::string("bad number in ") + what + ": '" + s + "'");
	return v;
}

long long to_int(const std::string &s, const char *what)
{
	char *end = nullptr;
	errno = 0;
	long long v = std::strtoll(s.c_str(), &end, 10);
	if (s.empty() || *end != '\0' || errno == ERANGE)
		throw FormatError(std::string("bad integer in ") + what + ": '" + s + "'");
	return v;
}

std::string header(const char *kind)
{
	return std::string("# seudo-") + kind + " v" + std::to_string(persist_version) + "\n";
}

void expect_header(std::istringstream &in, const char *kind)
{
	std::string line;
	std::getline(in, line);
	if (!line.empty() && line.back() == '\r')
		line.pop_back();
	if (line + "\n" != header(kind))
		throw FormatError(std::string("expected header '# seudo-") + kind + " v" + std::to_string(persist_version) + "'");
}

} // namespace

std::string profiles_csv(const std::vector<GlobalProfile> &profiles)
{
	std::string out = header("profiles") + "profile_id,row,col,weight\n";
	for (const auto &p : profiles)
		for (const auto &px : p.pixels)
			out += std::to_string(p.id) + "," + std::to_string(px.row) + "," + std::to_string(px.col) + "," + g17(px.weight) + "\n";
	return out;
}

std::string traces_csv(const std::map<ProfileId, std::vector<double>> &traces, std::size_t frames)
{
	std::string out = header("traces") + "frame";
	for (const auto &[id, tr] : traces)
		out += "," + std::to_string(id);
	out += "\n";
	for (std::size_t t = 0; t < frames; t++) {
		out += std::to_string(t);
		for (const auto &[id, tr] : traces)
			out += "," + g17(t < tr.size() ? tr[t] : 0.);
		out += "\n";
	}
	return out;
}

std::string events_header_line()
{
	return nlohmann::json{{"format", "seudo-events"}, {"version", persist_version}}.dump() + "\n";
}

std::string event_json_line(const DetectionEvent &e)
{
	nlohmann::json j = {
		{"frame", e.frame_index},
		{"profile_id", e.profile_id},
		{"phi", e.phi},
		{"kind", e.kind == EventKind::stable ? "stable" : "early"},
	};
	return j.dump() + "\n";
}

std::map<ProfileId, Footprint> parse_profiles_csv(const std::string &text)
{
	std::istringstream in(text);
	expect_header(in, "profiles");
	std::string line;
	std::getline(in, line);
	std::map<ProfileId, Footprint> out;
	while (std::getline(in, line)) {
		if (line.empty() || line == "\r")
			continue;
		auto f = split(line, ',');
		if (f.size() != 4)
			throw FormatError("profiles table: expected 4 fields, got '" + line + "'");
		out[ProfileId(to_int(f[0], "profiles"))].push_back({int(to_int(f[1], "profiles")), int(to_int(f[2], "profiles")), to_double(f[3], "profiles")});
	}
	return out;
}

std::map<ProfileId, std::vector<double>> parse_traces_csv(const std::string &text, std::size_t *frames)
{
	std::istringstream in(text);
	expect_header(in, "traces");
	std::string line;
	std::getline(in, line);
	auto head = split(line, ',');
	if (head.empty() || head[0] != "frame")
		throw FormatError("traces table: first column must be 'frame'");
	std::vector<ProfileId> ids;
	std::map<ProfileId, std::vector<double>> out;
	for (std::size_t i = 1; i < head.size(); i++) {
		ids.push_back(ProfileId(to_int(head[i], "traces header")));
		out[ids.back()];
	}
	std::size_t n = 0;
	while (std::getline(in, line)) {
		if (line.empty() || line == "\r")
			continue;
		auto f = split(line, ',');
		if (f.size() != ids.size() + 1)
			throw FormatError("traces table: row " + std::to_string(n) + " has the wrong number of fields");
		for (std::size_t i = 0; i < ids.size(); i++)
			out[ids[i]].push_back(to_double(f[i + 1], "traces"));
		n++;
	}
	if (frames)
		*frames = n;
	return out;
}

std::vector<DetectionEvent> parse_events_jsonl(const std::string &text)
{
	std::istringstream in(text);
	std::string line;
	std::vector<DetectionEvent> out;
	bool first = true;
	while (std::getline(in, line)) {
		if (line.empty())
			continue;
		nlohmann::json j;
		try {
			j = nlohmann::json::parse(line);
			if (first) {
				if (j.at("format") != "seudo-events" || j.at("version") != persist_version)
					throw FormatError("events: unsupported format or version");
				first = false;
				continue;
			}
			DetectionEvent e;
			e.frame_index = j.at("frame").get<std::int64_t>();
			e.profile_id = j.at("profile_id").get<ProfileId>();
			e.phi = j.at("phi").get<double>();
			const std::string kind = j.at("kind").get<std::string>();
			if (kind != "stable" && kind != "early")
				throw FormatError("events: bad kind '" + kind + "'");
			e.kind = kind == "stable" ? EventKind::stable : EventKind::early;
			out.push_back(e);
		} catch (const nlohmann::json::exception &ex) {
			throw FormatError(std::string("events: bad record: ") + ex.what());
		}
	}
	if (first)
		throw FormatError("events: missing header record");
	return out;
}

EventWriter::EventWriter(const std::string &path) : path_(path), out_(path, std::ios::binary)
{
	if (!out_)
		throw Error("cannot open " + path + " for writing");
	out_ << events_header_line();
	if (!out_.flush())
		throw Error("write failed: " + path);
}

void EventWriter::write(const std::vector<DetectionEvent> &events)
{
	for (const auto &e : events)
		out_ << event_json_line(e);
	if (!out_.flush())
		throw Error("write failed: " + path_);
}

std::string read_text_file(const std::string &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path + ": " + std::strerror(errno));
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void write_text_file(const std::string &path, const std::string &text)
{
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error("cannot open " + path + " for writing");
	out << text;
	if (!out.flush())
		throw Error("write failed: " + path);
}

void persist_snapshot(const std::string &dir, const Snapshot &snap, const EngineConfig &config)
{
	std::error_code ec;
	std::filesystem::create_directories(dir, ec);
	if (ec)
		throw Error("cannot create " + dir + ": " + ec.message());
	const std::filesystem::path d(dir);
	write_text_file((d / "profiles.csv").string(), profiles_csv(snap.profiles));
	write_text_file((d / "traces.csv").string(), traces_csv(snap.traces, std::size_t(snap.frames)));
	write_text_file((d / "config.json").string(), config_to_json(config) + "\n");
}

} // namespace seudo
