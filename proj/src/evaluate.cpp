#include "mixopt/evaluate.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "mixopt/error.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::evaluate {

const char* to_string(EvaluatorKind kind) {
    switch (kind) {
        case EvaluatorKind::SyntheticQuadratic: return "synthetic_quadratic";
        case EvaluatorKind::SyntheticTruncexp: return "synthetic_truncexp";
        case EvaluatorKind::TableLookup: return "table_lookup";
        case EvaluatorKind::ExternalProcess: return "external_process";
    }
    return "unknown";
}

void SyntheticTask::validate() const {
    if (!std::isfinite(base_loss)) {
        throw Error(ErrorKind::ConfigInvalid, "base loss must be finite");
    }
    if (!std::isfinite(curvature) || curvature <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "curvature must be positive");
    }
    if (!std::isfinite(quality_sensitivity) || quality_sensitivity < 0.0 ||
        quality_sensitivity > 1.0) {
        throw Error(ErrorKind::ConfigInvalid, "quality sensitivity must lie in [0, 1]");
    }
    if (noise) {
        noise->validate();
        if (noise->cutoff > 1.0) {
            throw Error(ErrorKind::ConfigInvalid, "noise cutoff must not exceed 1");
        }
    }
}

struct EvaluatorHandle::Impl {
    virtual ~Impl() = default;
    virtual EvaluatorKind kind() const = 0;
    virtual bool supports_concurrency() const { return true; }
    virtual std::optional<double> true_optimum() const { return std::nullopt; }
    virtual double evaluate(const MixtureManifest& manifest, std::int64_t iteration,
                            std::int64_t sample_index, std::uint64_t seed) = 0;
};

namespace {

double noise_draw(const std::optional<truncexp::TruncExpParams>& noise, std::uint64_t seed) {
    if (!noise) {
        return 0.0;
    }
    rng::Stream stream(seed);
    return truncexp::inverse_cdf(stream.uniform(), noise->rate, noise->cutoff);
}

class QuadraticImpl final : public EvaluatorHandle::Impl {
  public:
    QuadraticImpl(SyntheticTask task, std::vector<DomainDataset> domains)
        : task_(std::move(task)) {
        task_.validate();
        for (auto& d : domains) {
            const std::string name = d.name();
            domains_.emplace(name, std::move(d));
        }
    }

    EvaluatorKind kind() const override { return EvaluatorKind::SyntheticQuadratic; }
    std::optional<double> true_optimum() const override { return task_.base_loss; }

    double evaluate(const MixtureManifest& manifest, std::int64_t, std::int64_t,
                    std::uint64_t seed) override {
        for (const auto& selection : manifest.selections) {
            if (domains_.find(selection.domain) == domains_.end()) {
                throw Error(ErrorKind::EvaluatorFailure,
                            "manifest names unknown domain '" + selection.domain + "'");
            }
        }
        const MixingRatio ratio = ratio_of(manifest);
        if (ratio.size() != task_.optimum_ratio.size()) {
            throw Error(ErrorKind::DimensionMismatch,
                        "manifest domain count does not match the task optimum");
        }
        double loss = task_.base_loss + task_.curvature * ratio.squared_distance(task_.optimum_ratio);
        if (task_.quality_sensitivity > 0.0) {
            loss += task_.quality_sensitivity * (1.0 - mean_normalized_influence(manifest));
        }
        loss += noise_draw(task_.noise, seed);
        return loss;
    }

  private:
    // each point scored as (influence - domain min) / (domain max - min);
    // a constant-influence domain scores 1 (no quality signal to exploit)
    double mean_normalized_influence(const MixtureManifest& manifest) const {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& selection : manifest.selections) {
            const auto it = domains_.find(selection.domain);
            if (it == domains_.end()) {
                throw Error(ErrorKind::EvaluatorFailure,
                            "manifest names unknown domain '" + selection.domain + "'");
            }
            const DomainDataset& domain = it->second;
            const double low = domain.min_influence();
            const double span = domain.max_influence() - low;
            for (const auto& id : selection.point_ids) {
                total += span > 0.0 ? (domain.influence_of(id) - low) / span : 1.0;
                ++count;
            }
        }
        return count > 0 ? total / static_cast<double>(count) : 1.0;
    }

    SyntheticTask task_;
    std::unordered_map<std::string, DomainDataset> domains_;
};

class TruncexpImpl final : public EvaluatorHandle::Impl {
  public:
    TruncexpImpl(double base_loss, truncexp::TruncExpParams noise)
        : base_loss_(base_loss), noise_(noise) {
        noise_.validate();
        if (!std::isfinite(base_loss_)) {
            throw Error(ErrorKind::ConfigInvalid, "base loss must be finite");
        }
    }

    EvaluatorKind kind() const override { return EvaluatorKind::SyntheticTruncexp; }
    std::optional<double> true_optimum() const override { return base_loss_; }

    double evaluate(const MixtureManifest&, std::int64_t, std::int64_t,
                    std::uint64_t seed) override {
        return base_loss_ + noise_draw(noise_, seed);
    }

  private:
    double base_loss_;
    truncexp::TruncExpParams noise_;
};

class TableImpl final : public EvaluatorHandle::Impl {
  public:
    explicit TableImpl(std::unordered_map<std::string, double> losses)
        : losses_(std::move(losses)) {
        for (const auto& [digest, loss] : losses_) {
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::NonFiniteLoss,
                            "recorded loss for digest " + digest + " is not finite");
            }
        }
    }

    EvaluatorKind kind() const override { return EvaluatorKind::TableLookup; }

    double evaluate(const MixtureManifest& manifest, std::int64_t, std::int64_t,
                    std::uint64_t) override {
        const std::string digest = manifest.digest();
        const auto it = losses_.find(digest);
        if (it == losses_.end()) {
            throw Error(ErrorKind::EvaluatorFailure, "no recorded loss for manifest " + digest);
        }
        return it->second;
    }

  private:
    std::unordered_map<std::string, double> losses_;
};

[[noreturn]] void throw_errno(ErrorKind kind, const std::string& what) {
    throw Error(kind, what + ": " + std::strerror(errno));
}

class ExternalImpl final : public EvaluatorHandle::Impl {
  public:
    ExternalImpl(ExternalProcessConfig config, const std::vector<DomainDataset>& domains)
        : config_(std::move(config)) {
        for (const auto& d : domains) {
            auto& refs = payload_refs_[d.name()];
            for (const auto& point : d.points()) {
                if (point.payload_ref) {
                    refs.emplace(point.id, *point.payload_ref);
                }
            }
        }
        if (config_.command.empty()) {
            throw Error(ErrorKind::ConfigInvalid, "external evaluator needs a command");
        }
        if (!std::isfinite(config_.timeout_seconds) || config_.timeout_seconds <= 0.0) {
            throw Error(ErrorKind::ConfigInvalid, "evaluation timeout must be positive");
        }
        if (config_.manifest_dir.empty()) {
            config_.manifest_dir = std::filesystem::temp_directory_path() /
                                   ("mixopt_eval_" + std::to_string(::getpid()));
        }
    }

    ~ExternalImpl() override { shutdown(); }

    EvaluatorKind kind() const override { return EvaluatorKind::ExternalProcess; }
    bool supports_concurrency() const override { return false; }

    double evaluate(const MixtureManifest& manifest, std::int64_t iteration,
                    std::int64_t sample_index, std::uint64_t) override {
        const std::scoped_lock lock(mutex_);
        ensure_child();
        const std::filesystem::path manifest_path = write_manifest(manifest, iteration, sample_index);
        const json request{{"iteration", iteration},
                           {"manifest_path", manifest_path.string()},
                           {"sample_index", sample_index}};
        send_line(request.dump());
        const std::string reply = read_line_with_timeout();
        json parsed;
        try {
            parsed = json::parse(reply);
        } catch (const json::exception& e) {
            fail_child();
            throw Error(ErrorKind::ProtocolViolation,
                        std::string("unparseable evaluator reply: ") + e.what());
        }
        if (parsed.contains("error")) {
            throw Error(ErrorKind::EvaluatorFailure,
                        "evaluator reported: " + parsed.at("error").get<std::string>());
        }
        if (!parsed.contains("loss") || !parsed.at("loss").is_number()) {
            fail_child();
            throw Error(ErrorKind::ProtocolViolation, "evaluator reply lacks a numeric loss");
        }
        const double loss = parsed.at("loss").get<double>();
        if (!std::isfinite(loss)) {
            throw Error(ErrorKind::NonFiniteLoss, "evaluator returned a non-finite loss");
        }
        return loss;
    }

  private:
    void ensure_child() {
        if (pid_ > 0) {
            return;
        }
        int to_child[2];
        int from_child[2];
        if (::pipe(to_child) != 0) {
            throw_errno(ErrorKind::EvaluatorFailure, "pipe");
        }
        if (::pipe(from_child) != 0) {
            ::close(to_child[0]);
            ::close(to_child[1]);
            throw_errno(ErrorKind::EvaluatorFailure, "pipe");
        }
        const pid_t pid = ::fork();
        if (pid < 0) {
            for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
            throw_errno(ErrorKind::EvaluatorFailure, "fork");
        }
        if (pid == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
            std::vector<char*> argv;
            argv.reserve(config_.command.size() + 1);
            for (const auto& arg : config_.command) {
                argv.push_back(const_cast<char*>(arg.c_str()));
            }
            argv.push_back(nullptr);
            ::execvp(argv[0], argv.data());
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        stdin_fd_ = to_child[1];
        stdout_fd_ = from_child[0];
        ::fcntl(stdin_fd_, F_SETFD, FD_CLOEXEC);
        ::fcntl(stdout_fd_, F_SETFD, FD_CLOEXEC);
        pid_ = pid;
        buffer_.clear();
    }

    std::filesystem::path write_manifest(const MixtureManifest& manifest, std::int64_t iteration,
                                         std::int64_t sample_index) {
        std::error_code ec;
        std::filesystem::create_directories(config_.manifest_dir, ec);
        if (ec) {
            throw Error(ErrorKind::EvaluatorFailure,
                        "cannot create manifest dir " + config_.manifest_dir.string() + ": " +
                            ec.message());
        }
        const std::filesystem::path path =
            config_.manifest_dir / ("eval_" + std::to_string(iteration) + "_" +
                                    std::to_string(sample_index) + ".json");
        json body;
        to_json(body, manifest);
        body["digest"] = manifest.digest();
        // payload references resolved per selected point, when known
        json refs = json::array();
        for (const auto& selection : manifest.selections) {
            json entry{{"domain", selection.domain}, {"refs", json::array()}};
            const auto domain_refs = payload_refs_.find(selection.domain);
            for (const auto& id : selection.point_ids) {
                json ref;  // null when no payload is attached
                if (domain_refs != payload_refs_.end()) {
                    const auto it = domain_refs->second.find(id);
                    if (it != domain_refs->second.end()) {
                        ref = it->second;
                    }
                }
                entry["refs"].push_back(ref);
            }
            refs.push_back(std::move(entry));
        }
        body["payload_refs"] = std::move(refs);
        std::ofstream out(path);
        out << body.dump() << "\n";
        if (!out) {
            throw Error(ErrorKind::EvaluatorFailure, "cannot write " + path.string());
        }
        return path;
    }

    void send_line(const std::string& line) {
        std::string payload = line;
        payload.push_back('\n');
        std::size_t written = 0;
        while (written < payload.size()) {
            const ssize_t n =
                ::write(stdin_fd_, payload.data() + written, payload.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail_child();
                throw Error(ErrorKind::EvaluatorFailure, "evaluator process closed its input");
            }
            written += static_cast<std::size_t>(n);
        }
    }

    std::string read_line_with_timeout() {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration<double>(config_.timeout_seconds);
        while (true) {
            const auto newline = buffer_.find('\n');
            if (newline != std::string::npos) {
                std::string line = buffer_.substr(0, newline);
                buffer_.erase(0, newline + 1);
                return line;
            }
            const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (remaining.count() <= 0) {
                fail_child();
                throw Error(ErrorKind::Timeout, "evaluator exceeded " +
                                                    std::to_string(config_.timeout_seconds) +
                                                    " seconds");
            }
            struct pollfd pfd{stdout_fd_, POLLIN, 0};
            const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(
                                                  remaining.count(), 60'000)));
            if (ready < 0) {
                if (errno == EINTR) continue;
                fail_child();
                throw_errno(ErrorKind::EvaluatorFailure, "poll");
            }
            if (ready == 0) {
                continue;  // recheck the deadline
            }
            char chunk[4096];
            const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
            if (n < 0) {
                if (errno == EINTR) continue;
                fail_child();
                throw_errno(ErrorKind::EvaluatorFailure, "read");
            }
            if (n == 0) {
                fail_child();
                throw Error(ErrorKind::EvaluatorFailure,
                            "evaluator process exited without replying");
            }
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    // kill and reap the child so the next call starts fresh
    void fail_child() {
        if (pid_ <= 0) {
            return;
        }
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
        cleanup_fds();
    }

    void shutdown() {
        if (pid_ <= 0) {
            return;
        }
        if (stdin_fd_ >= 0) {
            ::close(stdin_fd_);
            stdin_fd_ = -1;
        }
        int status = 0;
        for (int i = 0; i < 200; ++i) {  // two seconds of grace after stdin EOF
            if (::waitpid(pid_, &status, WNOHANG) != 0) {
                cleanup_fds();
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        cleanup_fds();
    }

    void cleanup_fds() {
        if (stdin_fd_ >= 0) ::close(stdin_fd_);
        if (stdout_fd_ >= 0) ::close(stdout_fd_);
        stdin_fd_ = -1;
        stdout_fd_ = -1;
        pid_ = -1;
        buffer_.clear();
    }

    ExternalProcessConfig config_;
    std::unordered_map<std::string, std::unordered_map<std::string, std::string>> payload_refs_;
    std::mutex mutex_;
    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    std::string buffer_;
};

std::unordered_map<std::string, double> load_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigInvalid, "cannot open loss table: " + path);
    }
    std::string line;
    if (!std::getline(in, line) ||
        line.find("digest,loss") != 0) {
        throw Error(ErrorKind::ConfigInvalid, "loss table must start with 'digest,loss': " + path);
    }
    std::unordered_map<std::string, double> losses;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw Error(ErrorKind::ConfigInvalid,
                        path + ":" + std::to_string(line_no) + ": expected digest,loss");
        }
        try {
            losses[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::ConfigInvalid,
                        path + ":" + std::to_string(line_no) + ": bad loss value");
        }
    }
    return losses;
}

}  // namespace

EvaluatorHandle EvaluatorHandle::synthetic_quadratic(SyntheticTask task,
                                                     std::vector<DomainDataset> domains) {
    return EvaluatorHandle(std::make_shared<QuadraticImpl>(std::move(task), std::move(domains)));
}

EvaluatorHandle EvaluatorHandle::synthetic_truncexp(double base_loss,
                                                    truncexp::TruncExpParams noise) {
    return EvaluatorHandle(std::make_shared<TruncexpImpl>(base_loss, noise));
}

EvaluatorHandle EvaluatorHandle::table_lookup(
    std::unordered_map<std::string, double> losses_by_digest) {
    return EvaluatorHandle(std::make_shared<TableImpl>(std::move(losses_by_digest)));
}

EvaluatorHandle EvaluatorHandle::table_lookup_csv(const std::string& path) {
    return EvaluatorHandle(std::make_shared<TableImpl>(load_loss_csv(path)));
}

EvaluatorHandle EvaluatorHandle::external_process(ExternalProcessConfig config) {
    return EvaluatorHandle(std::make_shared<ExternalImpl>(std::move(config),
                                                          std::vector<DomainDataset>{}));
}

EvaluatorHandle EvaluatorHandle::external_process(ExternalProcessConfig config,
                                                  const std::vector<DomainDataset>& domains) {
    return EvaluatorHandle(std::make_shared<ExternalImpl>(std::move(config), domains));
}

EvaluatorHandle EvaluatorHandle::from_config(const json& j,
                                             const std::vector<DomainDataset>& domains,
                                             const std::filesystem::path& base_dir) {
    const auto resolve = [&base_dir](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "synthetic_quadratic") {
        SyntheticTask task;
        task.optimum_ratio = MixingRatio::normalized(j.at("optimum_ratio").get<std::vector<double>>());
        task.base_loss = j.value("base_loss", 0.0);
        task.curvature = j.value("curvature", 1.0);
        task.quality_sensitivity = j.value("quality_sensitivity", 0.0);
        if (j.contains("noise")) {
            truncexp::TruncExpParams noise;
            noise.rate = j.at("noise").value("rate", 1.0);
            noise.cutoff = j.at("noise").value("cutoff", 1.0);
            task.noise = noise;
        }
        return synthetic_quadratic(std::move(task), domains);
    }
    if (kind == "synthetic_truncexp") {
        truncexp::TruncExpParams noise;
        noise.rate = j.at("noise").value("rate", 1.0);
        noise.cutoff = j.at("noise").value("cutoff", 1.0);
        return synthetic_truncexp(j.value("base_loss", 0.0), noise);
    }
    if (kind == "table_lookup") {
        return table_lookup_csv(resolve(j.at("table").get<std::string>()).string());
    }
    if (kind == "external_process") {
        ExternalProcessConfig config;
        config.command = j.at("command").get<std::vector<std::string>>();
        config.timeout_seconds = j.value("timeout_seconds", 21600.0);
        if (j.contains("manifest_dir")) {
            config.manifest_dir = resolve(j.at("manifest_dir").get<std::string>());
        }
        return external_process(std::move(config), domains);
    }
    throw Error(ErrorKind::ConfigInvalid, "unknown evaluator kind '" + kind + "'");
}

EvaluatorKind EvaluatorHandle::kind() const { return impl_->kind(); }

bool EvaluatorHandle::supports_concurrency() const { return impl_->supports_concurrency(); }

std::optional<double> EvaluatorHandle::true_optimum() const { return impl_->true_optimum(); }

double EvaluatorHandle::evaluate(const MixtureManifest& manifest, std::int64_t iteration,
                                 std::int64_t sample_index, std::uint64_t seed) const {
    return impl_->evaluate(manifest, iteration, sample_index, seed);
}

double evaluate_manifest(const EvaluatorHandle& handle, const MixtureManifest& manifest,
                         std::int64_t iteration, std::int64_t sample_index, std::uint64_t seed) {
    return handle.evaluate(manifest, iteration, sample_index, seed);
}

}  // namespace mixopt::evaluate
