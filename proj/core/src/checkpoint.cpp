#include "segkit/checkpoint.hpp"

#include <array>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "segkit/errors.hpp"

namespace segkit {

namespace {

constexpr const char* kMagic = "SEGKITCKPT v1";

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::string fmt_hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

void write_tensor_line(std::ostream& out, const char* tag, const std::string& name,
                       const Tensor& t) {
    out << tag << " " << name << " " << t.rank();
    for (std::size_t d : t.shape()) out << " " << d;
    out << "\n";
}

struct TensorEntry {
    std::string tag, name;
    std::vector<std::size_t> shape;
    std::size_t elems = 0;
};

} // namespace

void checkpoint_save(const std::string& path, Network& net, const OptState* opt,
                     std::size_t epochs_done, const History& history) {
    std::ostringstream header;
    header << kMagic << "\n";
    header << "spec " << to_string(net.spec.style) << " " << net.spec.input_channels << " "
           << net.spec.base_width << " " << net.spec.depth << " " << net.spec.output_classes
           << "\n";
    header << "epochs_done " << epochs_done << "\n";
    header << "adam_t " << (opt ? opt->t : 0) << "\n";
    header << "history " << history.size() << "\n";
    for (const EpochStats& e : history)
        header << e.epoch << " " << fmt_hex_double(e.rate) << " "
               << fmt_hex_double(e.train_loss) << " " << fmt_hex_double(e.val_iou) << " "
               << fmt_hex_double(e.val_dice) << " " << fmt_hex_double(e.train_jaccard) << "\n";

    auto params = net.graph.parameters();
    const auto state = net.graph.state_tensors();
    std::size_t tensor_count = params.size() + state.size() + (opt ? 2 * params.size() : 0);
    header << "tensors " << tensor_count << "\n";

    std::vector<const Tensor*> payload_order;
    for (const auto& p : params) {
        write_tensor_line(header, "param", p.name, *p.value);
        payload_order.push_back(p.value);
    }
    for (const auto& [name, tensor] : state) {
        write_tensor_line(header, "state", name, *tensor);
        payload_order.push_back(tensor);
    }
    if (opt) {
        if (opt->m.size() != params.size() || opt->v.size() != params.size())
            throw state_error("checkpoint_save: optimizer state does not match parameters");
        for (std::size_t i = 0; i < params.size(); ++i) {
            write_tensor_line(header, "optm", params[i].name, opt->m[i]);
            payload_order.push_back(&opt->m[i]);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            write_tensor_line(header, "optv", params[i].name, opt->v[i]);
            payload_order.push_back(&opt->v[i]);
        }
    }

    std::vector<std::uint8_t> payload;
    std::size_t total_elems = 0;
    for (const Tensor* t : payload_order) total_elems += t->size();
    payload.resize(total_elems * sizeof(float));
    std::size_t off = 0;
    for (const Tensor* t : payload_order) {
        std::memcpy(payload.data() + off, t->data(), t->size() * sizeof(float));
        off += t->size() * sizeof(float);
    }

    header << "payload " << payload.size() << " crc32 ";
    char crcbuf[16];
    std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32(payload.data(), payload.size()));
    header << crcbuf << "\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    const std::string h = header.str();
    out.write(h.data(), std::streamsize(h.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
    if (!out) throw io_error("failed writing checkpoint: " + path);
}

Checkpoint checkpoint_read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);

    auto fail = [&](const std::string& why) -> io_error {
        return io_error("corrupt checkpoint " + path + ": " + why);
    };

    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw io_error("not a checkpoint (bad magic/version): " + path);

    Checkpoint ck;
    std::string style;
    std::size_t history_rows = 0, tensor_count = 0, payload_bytes = 0;
    std::string crc_hex;
    std::vector<TensorEntry> entries;

    auto expect = [&](const char* key) {
        if (!std::getline(in, line)) throw fail(std::string("missing ") + key);
        std::istringstream ss(line);
        std::string k;
        ss >> k;
        if (k != key) throw fail("expected '" + std::string(key) + "', got '" + k + "'");
        return ss;
    };

    {
        auto ss = expect("spec");
        ss >> style >> ck.spec.input_channels >> ck.spec.base_width >> ck.spec.depth >>
            ck.spec.output_classes;
        if (!ss) throw fail("bad spec line");
        ck.spec.style = net_style_from_string(style);
    }
    {
        auto ss = expect("epochs_done");
        ss >> ck.epochs_done;
    }
    {
        auto ss = expect("adam_t");
        ss >> ck.adam_t;
    }
    {
        auto ss = expect("history");
        ss >> history_rows;
    }
    for (std::size_t i = 0; i < history_rows; ++i) {
        if (!std::getline(in, line)) throw fail("truncated history");
        std::istringstream ss(line);
        EpochStats e;
        std::string rate, loss, iou, dc, jc;
        ss >> e.epoch >> rate >> loss >> iou >> dc >> jc;
        if (!ss) throw fail("bad history row");
        e.rate = std::strtod(rate.c_str(), nullptr);
        e.train_loss = std::strtod(loss.c_str(), nullptr);
        e.val_iou = std::strtod(iou.c_str(), nullptr);
        e.val_dice = std::strtod(dc.c_str(), nullptr);
        e.train_jaccard = std::strtod(jc.c_str(), nullptr);
        ck.history.push_back(e);
    }
    {
        auto ss = expect("tensors");
        ss >> tensor_count;
    }
    for (std::size_t i = 0; i < tensor_count; ++i) {
        if (!std::getline(in, line)) throw fail("truncated tensor directory");
        std::istringstream ss(line);
        TensorEntry e;
        std::size_t rank = 0;
        ss >> e.tag >> e.name >> rank;
        e.elems = 1;
        for (std::size_t d = 0; d < rank; ++d) {
            std::size_t extent = 0;
            ss >> extent;
            e.shape.push_back(extent);
            e.elems *= extent;
        }
        if (!ss) throw fail("bad tensor line");
        entries.push_back(std::move(e));
    }
    {
        auto ss = expect("payload");
        std::string crc_kw;
        ss >> payload_bytes >> crc_kw >> crc_hex;
        if (!ss || crc_kw != "crc32") throw fail("bad payload line");
    }

    std::vector<std::uint8_t> payload(payload_bytes);
    in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload_bytes));
    if (std::size_t(in.gcount()) != payload_bytes)
        throw fail("payload truncated (checksum cannot match)");

    char crcbuf[16];
    std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32(payload.data(), payload.size()));
    if (crc_hex != crcbuf) throw fail("checksum mismatch");

    std::size_t expected = 0;
    for (const TensorEntry& e : entries) expected += e.elems * sizeof(float);
    if (expected != payload_bytes) throw fail("tensor directory does not match payload size");

    ck.has_opt = false;
    std::size_t off = 0;
    std::size_t opt_seen = 0;
    for (const TensorEntry& e : entries) {
        Tensor t(e.shape);
        std::memcpy(t.data(), payload.data() + off, e.elems * sizeof(float));
        off += e.elems * sizeof(float);
        if (e.tag == "param") ck.params.emplace_back(e.name, std::move(t));
        else if (e.tag == "state") ck.state.emplace_back(e.name, std::move(t));
        else if (e.tag == "optm") { ck.opt_m.push_back(std::move(t)); ++opt_seen; }
        else if (e.tag == "optv") { ck.opt_v.push_back(std::move(t)); ++opt_seen; }
        else throw fail("unknown tensor tag '" + e.tag + "'");
    }
    ck.has_opt = opt_seen > 0;
    return ck;
}

void checkpoint_restore(Network& net, const Checkpoint& ck, OptState* opt) {
    if (!(net.spec == ck.spec))
        throw state_error("checkpoint spec mismatch: file has " + to_string(ck.spec.style) +
                          " in=" + std::to_string(ck.spec.input_channels) + " width=" +
                          std::to_string(ck.spec.base_width) + " depth=" +
                          std::to_string(ck.spec.depth) + " classes=" +
                          std::to_string(ck.spec.output_classes) + ", network was built as " +
                          to_string(net.spec.style) + " in=" +
                          std::to_string(net.spec.input_channels) + " width=" +
                          std::to_string(net.spec.base_width) + " depth=" +
                          std::to_string(net.spec.depth) + " classes=" +
                          std::to_string(net.spec.output_classes));

    auto params = net.graph.parameters();
    if (params.size() != ck.params.size())
        throw state_error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != ck.params[i].first ||
            params[i].value->shape() != ck.params[i].second.shape())
            throw state_error("checkpoint parameter '" + ck.params[i].first +
                              "' does not match network parameter '" + params[i].name + "'");
        *params[i].value = ck.params[i].second;
    }

    auto state = net.graph.state_tensors();
    if (state.size() != ck.state.size())
        throw state_error("checkpoint state tensor count mismatch");
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i].first != ck.state[i].first ||
            state[i].second->shape() != ck.state[i].second.shape())
            throw state_error("checkpoint state tensor '" + ck.state[i].first +
                              "' does not match network");
        *state[i].second = ck.state[i].second;
    }

    if (opt) {
        if (ck.has_opt) {
            if (ck.opt_m.size() != params.size() || ck.opt_v.size() != params.size())
                throw state_error("checkpoint optimizer state incomplete");
            opt->m = ck.opt_m;
            opt->v = ck.opt_v;
            opt->t = ck.adam_t;
        } else {
            opt->m.clear();
            opt->v.clear();
            opt->t = 0;
        }
    }
}

Network checkpoint_load(const std::string& path, OptState* opt, std::size_t* epochs_done,
                        History* history) {
    const Checkpoint ck = checkpoint_read(path);
    Network net = build<float>(ck.spec, 0);
    checkpoint_restore(net, ck, opt);
    if (epochs_done) *epochs_done = ck.epochs_done;
    if (history) *history = ck.history;
    return net;
}

} // namespace segkit
