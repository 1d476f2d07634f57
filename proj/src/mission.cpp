#include "aeromap/mission.hpp"

#include "aeromap/errors.hpp"
#include "aeromap/occupancy_grid.hpp"
#include "aeromap/platform.hpp"
#include "aeromap/ply.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace aeromap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kTickDt = 0.02;
constexpr double kClimbHeight = 3.0;
constexpr double kClimbTolerance = 0.25;
constexpr int kIcpEveryNthScan = 3;
constexpr int kGridEveryNthScan = 10;
constexpr int kLoopAttemptsPerNode = 3;
// Nominal planning durations: the platform hovers (and drains battery) for
// these spans, keeping the timeline deterministic without wall clocks.
constexpr double kViewPlanNominalS = 0.5;
constexpr double kPathPlanBatchS = 0.125;

// Seed stream salts so subsystems never share random state.
enum : std::uint64_t {
    kSaltScan = 1,
    kSaltNodeCloud = 2,
    kSaltDriftBias = 3,
    kSaltDriftWhite = 4,
    kSaltPlanner = 5,
    kSaltFlight = 6,
};

struct EventLog {
    std::vector<std::string> lines;
    double tick_time = 0.0;
    int seq = 0;
    // mission.log is written once at the end; AEROMAP_LOG_STDERR mirrors
    // events to stderr as they happen so long flights can be watched live.
    bool echo = std::getenv("AEROMAP_LOG_STDERR") != nullptr;

    void start_tick(double t) {
        tick_time = t;
        seq = 0;
    }

    void add(const char* fmt, ...) {
        char body[512];
        va_list args;
        va_start(args, fmt);
        std::vsnprintf(body, sizeof body, fmt, args);
        va_end(args);
        char stamp[64];
        std::snprintf(stamp, sizeof stamp, "t=%.9g ",
                      tick_time + seq * 1e-6);
        ++seq;
        lines.emplace_back(std::string(stamp) + body);
        if (echo) std::fprintf(stderr, "%s\n", lines.back().c_str());
    }
};

struct NodeTruth {
    int id = 0;
    double t = 0.0;
    Pose gt;
};

/// Deterministic every-kth-point subset, used for the ICP source where a
/// uniform voxel pass would cost more than the registration itself.
PointCloud stride_sample(const PointCloud& cloud, std::size_t target) {
    if (cloud.points.size() <= target) return cloud;
    const std::size_t stride =
        (cloud.points.size() + target - 1) / target;
    PointCloud out;
    out.source_scan_id = cloud.source_scan_id;
    out.points.reserve(cloud.points.size() / stride + 1);
    for (std::size_t i = 0; i < cloud.points.size(); i += stride)
        out.points.push_back(cloud.points[i]);
    return out;
}

enum class Phase { Climb, Relocalize, AtView, Fly };

class Runner {
public:
    Runner(const MissionConfig& cfg, bool resuming)
        : cfg_(cfg), resuming_(resuming) {
        scene_ = load_scene(cfg.scene_path);
        see_cfg_ = cfg.see;
        see_cfg_.site_bounds = scene_.bounds;
        see_cfg_.sensor_max_range_m = cfg.sensor.max_range_m;
        see_cfg_.sensor_vertical_fov_deg = cfg.sensor.vertical_fov_deg;
        // A quarter of the integration voxel: coarse enough to reject the
        // same ray lattice scanned twice from one spot, fine enough that a
        // genuinely shifted viewpoint still densifies the surface until
        // frontiers reach the target density.
        see_cfg_.dedup_radius_m = 0.25 * cfg.see_integration_voxel_m;
        see_ = make_see_state(see_cfg_);
        graph_.config = cfg.graph;
        grid_ = OccupancyGrid(cfg.grid_voxel_m);

        plan_cfg_ = cfg.plan;
        plan_cfg_.region = scene_.bounds.inflated(cfg.see.view_distance_m);
        const Vec3 takeoff = scene_.takeoff.translation;
        plan_cfg_.region.min = plan_cfg_.region.min.cwiseMin(
            takeoff - Vec3(2.0, 2.0, 0.0));
        plan_cfg_.region.max = plan_cfg_.region.max.cwiseMax(
            takeoff + Vec3(2.0, 2.0, kClimbHeight + 2.0));
        plan_cfg_.region.min.z() = std::max(plan_cfg_.region.min.z(), 0.0);

        climb_cfg_ = cfg.control;
        climb_cfg_.arrival_tolerance_m = kClimbTolerance;
    }

    MissionConfig cfg_;
    bool resuming_;
    Scene scene_;
    SeeConfig see_cfg_;
    PlanConfig plan_cfg_;
    ControlConfig climb_cfg_;

    PoseGraph graph_;
    DescriptorDatabase db_;
    SeeState see_;
    OccupancyGrid grid_{0.5};
    IndexedCloud submap_{PointCloud{}};
    bool submap_valid_ = false;

    PlatformState platform_;
    Pose est_pose_;
    Pose prev_scan_est_;
    Pose prev_scan_gt_;
    bool have_prev_scan_ = false;
    DriftModel drift_;
    Rng drift_rng_{0};
    std::uint64_t flight_seed_ = 0;

    std::int64_t scan_counter_ = 0;
    long tick_ = 0;
    int flight_scan_ordinal_ = 0;

    Phase phase_ = Phase::Climb;
    bool pending_view_scan_ = false;
    View current_view_;
    std::vector<PlanState> waypoints_;
    std::size_t wp_index_ = 0;

    EventLog log_;
    std::vector<NodeTruth> node_truth_;
    int flights_ = 1;
    std::uint64_t master_seed_ = 0;
    int loop_closures_ = 0;
    int views_visited_ = 0;
    double reloc_error_m_ = 0.0;
    int reloc_attempts_ = 0;
    bool battery_out_ = false;
    bool done_ = false;
    MissionStatus status_ = MissionStatus::Complete;

    double now() const { return tick_ * kTickDt; }

    void init_flight(std::uint64_t flight_seed) {
        flight_seed_ = flight_seed;
        drift_ = DriftModel(cfg_.drift.translation_bias_sigma_m_per_m,
                            cfg_.drift.yaw_bias_sigma_rad_per_m,
                            cfg_.drift.translation_white_sigma_m,
                            cfg_.drift.yaw_white_sigma_rad,
                            derive_seed(flight_seed, kSaltDriftBias));
        drift_rng_ = Rng(derive_seed(flight_seed, kSaltDriftWhite));
        plan_cfg_.seed = derive_seed(flight_seed, kSaltPlanner);

        platform_ = PlatformState{};
        platform_.position = scene_.takeoff.translation;
        platform_.yaw = scene_.takeoff.yaw();
        platform_.battery_s = cfg_.battery_s;
        est_pose_ = Pose::from_xyz_yaw(platform_.position, platform_.yaw);
        have_prev_scan_ = false;
        flight_scan_ordinal_ = 0;
        phase_ = Phase::Climb;
    }

    // ---- logging helpers ----

    void log_cmd(const VelocityCommand& cmd, double dist) {
        log_.add("CMD x=%.9g y=%.9g z=%.9g yaw=%.9g vx=%.9g vy=%.9g "
                 "vz=%.9g wz=%.9g dist=%.9g",
                 est_pose_.translation.x(), est_pose_.translation.y(),
                 est_pose_.translation.z(), est_pose_.yaw(),
                 cmd.velocity.x(), cmd.velocity.y(), cmd.velocity.z(),
                 cmd.yaw_rate, dist);
    }

    // ---- platform and estimate advancement ----

    void apply_command(const VelocityCommand& cmd, double dist) {
        log_cmd(cmd, dist);
        platform_ = step_platform(platform_, cmd.velocity, cmd.yaw_rate,
                                  kTickDt);
        // Dead-reckon the estimate between scans; scans overwrite it with
        // the odometry/ICP chain.
        est_pose_.translation += cmd.velocity * kTickDt;
        est_pose_.rotation =
            (rotation_exp(Vec3(0.0, 0.0, cmd.yaw_rate * kTickDt)) *
             est_pose_.rotation)
                .normalized();
        ++tick_;
        log_.start_tick(now());
        if (battery_exhausted(platform_)) battery_out_ = true;
    }

    void hover_tick() { apply_command(VelocityCommand{}, 0.0); }

    /// Holds position for a nominal planning duration. Returns false when
    /// the battery empties mid-hover.
    bool advance_hover(double duration_s) {
        const long n =
            static_cast<long>(std::ceil(duration_s / kTickDt));
        for (long i = 0; i < n; ++i) {
            hover_tick();
            if (battery_out_) return false;
        }
        return true;
    }

    // ---- scan pipeline ----

    bool scan_tick_due() const {
        const int ticks_per_scan = std::max(
            1, static_cast<int>(std::lround(
                   1.0 / (cfg_.sensor.scan_rate_hz * kTickDt))));
        return tick_ % ticks_per_scan == 0;
    }

    void rebuild_submap_if_needed() {
        if (submap_valid_) return;
        std::vector<std::pair<Pose, PointCloud>> nodes;
        nodes.reserve(graph_.nodes.size());
        for (const GraphNode& n : graph_.nodes)
            nodes.emplace_back(n.pose, n.cloud);
        submap_ = IndexedCloud(build_submap(nodes, est_pose_, cfg_.submap));
        submap_valid_ = true;
    }

    /// Applies a graph optimization's pose deltas to the estimate chain,
    /// the exploration state, and (when corrections are large) the grid.
    void propagate_optimization(const std::vector<Pose>& old_poses) {
        // The stored poses are quantized, so a well-converged optimization
        // frequently leaves every node bit-identical. Nothing downstream can
        // change then: identity deltas keep the map, classifications and
        // estimate exactly as they are.
        bool any_moved = false;
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            const Pose& now = graph_.nodes[i].pose;
            const Pose& before = old_poses[i];
            if (now.translation != before.translation ||
                now.rotation.coeffs() != before.rotation.coeffs()) {
                any_moved = true;
                break;
            }
        }
        if (!any_moved) return;

        std::map<std::int64_t, Pose> deltas;
        double max_shift = 0.0;
        for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
            const Pose delta =
                compose(graph_.nodes[i].pose, inverse(old_poses[i]));
            deltas[graph_.nodes[i].cloud.source_scan_id] = delta;
            max_shift = std::max(max_shift, delta.translation.norm());
        }
        const Pose last_delta = compose(
            graph_.nodes.back().pose, inverse(old_poses.back()));
        est_pose_ = compose(last_delta, est_pose_);
        prev_scan_est_ = compose(last_delta, prev_scan_est_);
        submap_valid_ = false;

        if (!see_.points.empty()) apply_graph_update(see_, deltas);

        if (max_shift > 0.5 * grid_.voxel_edge()) {
            grid_ = OccupancyGrid(cfg_.grid_voxel_m);
            for (const GraphNode& n : graph_.nodes)
                integrate_scan(grid_, transform_cloud(n.cloud, n.pose),
                               n.pose.translation);
        }
    }

    void optimize_and_propagate() {
        std::vector<Pose> old_poses;
        old_poses.reserve(graph_.nodes.size());
        for (const GraphNode& n : graph_.nodes) old_poses.push_back(n.pose);
        const OptimizeReport report = optimize(graph_);
        log_.add("OPTIMIZE iters=%d cost0=%.9g cost1=%.9g",
                 report.iterations, report.initial_cost, report.final_cost);
        propagate_optimization(old_poses);
    }

    void attempt_loop_closures(int node_id) {
        const auto candidates =
            detect_loop_candidates(graph_, node_id, cfg_.loop_closure);
        int tried = 0;
        for (int cand : candidates) {
            if (tried++ >= kLoopAttemptsPerNode) break;
            log_.add("LC_ATTEMPT from=%d to=%d", cand, node_id);
            const LoopVerification v = verify_loop(
                graph_, cand, node_id, cfg_.loop_closure, cfg_.icp);
            if (!v.accepted) {
                log_.add("LC_REJECT from=%d to=%d reason=%s", cand, node_id,
                         v.reason == LoopVerification::Reason::NotConverged
                             ? "not_converged"
                             : "too_few_inliers");
                continue;
            }
            add_factor(graph_, v.factor);
            ++loop_closures_;
            log_.add("LC_ACCEPT from=%d to=%d inliers=%zu", cand, node_id,
                     v.icp.inliers);
            optimize_and_propagate();
            break;
        }
    }

    /// One full perception step: simulate, estimate, register, map.
    void process_scan() {
        const std::int64_t scan_id = scan_counter_++;
        const int ordinal = flight_scan_ordinal_++;
        const Pose gt_pose = platform_.pose();
        PointCloud cloud = simulate_scan(
            scene_, gt_pose, cfg_.sensor,
            derive_seed(master_seed_, kSaltScan,
                        static_cast<std::uint64_t>(scan_id)));
        cloud.source_scan_id = scan_id;
        log_.add("SCAN id=%lld points=%zu",
                 static_cast<long long>(scan_id), cloud.points.size());

        // Odometry prior from the drifted increment since the last scan.
        if (have_prev_scan_) {
            const Pose rel =
                drifted_increment(prev_scan_gt_, gt_pose, drift_, drift_rng_);
            est_pose_ = compose(prev_scan_est_, rel);
        }

        if (phase_ == Phase::Relocalize) {
            process_relocalization_scan(scan_id, gt_pose, cloud);
            prev_scan_gt_ = gt_pose;
            prev_scan_est_ = est_pose_;
            have_prev_scan_ = true;
            return;
        }

        // Scan-to-submap refinement at a third of the scan rate.
        if (ordinal % kIcpEveryNthScan == 0 && !graph_.nodes.empty()) {
            rebuild_submap_if_needed();
            const PointCloud source =
                stride_sample(cloud, cfg_.icp_source_target_points);
            const IcpResult r =
                icp_register(source, submap_, est_pose_, cfg_.icp);
            const bool applied = r.converged && !r.degenerate &&
                                 r.inliers >= cfg_.icp.min_inliers;
            if (applied) est_pose_ = r.transform;
            log_.add("ICP scan=%lld converged=%d inliers=%zu rms=%.9g "
                     "applied=%d",
                     static_cast<long long>(scan_id), r.converged ? 1 : 0,
                     r.inliers, r.rms_m, applied ? 1 : 0);
        }

        PointCloud node_cloud =
            downsample(cloud, cfg_.node_cloud_target_points,
                       derive_seed(master_seed_, kSaltNodeCloud,
                                   static_cast<std::uint64_t>(scan_id)));
        node_cloud.source_scan_id = scan_id;

        const bool session_first =
            graph_.nodes.empty() ||
            graph_.nodes.back().session != graph_.current_session();
        const bool force_node = pending_view_scan_ || session_first;
        // A session's first node carries an absolute pose; later ones the
        // relative motion from the previous node in the estimate frame.
        const Pose relative =
            session_first
                ? est_pose_
                : compose(inverse(graph_.nodes.back().pose), est_pose_);
        const auto node_id =
            add_node(graph_, relative, node_cloud, force_node);
        if (node_id) {
            // Adopt the snapped graph pose so the odometry chain and the
            // graph never diverge by more than the serialization grid.
            est_pose_ = graph_.nodes.back().pose;
            node_truth_.push_back(NodeTruth{*node_id, now(), gt_pose});
            log_.add("NODE id=%d x=%.9g y=%.9g z=%.9g yaw=%.9g", *node_id,
                     est_pose_.translation.x(), est_pose_.translation.y(),
                     est_pose_.translation.z(), est_pose_.yaw());
            db_.insert(*node_id, compute_descriptor(node_cloud,
                                                    cfg_.scan_context));
            submap_valid_ = false;
            attempt_loop_closures(*node_id);
        }

        if (ordinal % kGridEveryNthScan == 0 || pending_view_scan_) {
            const PointCloud thin =
                thin_cloud(cloud, cfg_.see_integration_voxel_m);
            integrate_scan(grid_, transform_cloud(thin, est_pose_),
                           est_pose_.translation);
        }

        if (pending_view_scan_) {
            pending_view_scan_ = false;
            integrate_view_scan(scan_id, cloud);
        }

        prev_scan_gt_ = gt_pose;
        prev_scan_est_ = est_pose_;
        have_prev_scan_ = true;
    }

    void integrate_view_scan(std::int64_t scan_id, const PointCloud& cloud) {
        PointCloud thin = thin_cloud(cloud, cfg_.see_integration_voxel_m);
        thin.source_scan_id = scan_id;
        const PointCloud map_frame = transform_cloud(thin, est_pose_);
        View capture;
        capture.position = est_pose_.translation;
        capture.yaw = est_pose_.yaw();
        capture.target_frontier = current_view_.target_frontier;
        const IntegrateResult res =
            integrate_cloud(see_, map_frame, capture);

        std::size_t near_target = 0;
        const std::int64_t target = current_view_.target_frontier;
        if (target >= 0 &&
            static_cast<std::size_t>(target) < see_.points.size()) {
            const Vec3 tp =
                see_.points[static_cast<std::size_t>(target)].position;
            const double r = see_cfg_.resolution_radius_m;
            for (std::size_t i = res.first_new_index; i < see_.points.size();
                 ++i) {
                if ((see_.points[i].position - tp).norm() <= r)
                    ++near_target;
            }
        }
        record_view_outcome(see_, current_view_, near_target);
        ++views_visited_;

        std::size_t unobservable = 0;
        for (const SeePoint& p : see_.points)
            if (p.unobservable) ++unobservable;
        log_.add("SEE added=%zu frontiers=%zu unobservable=%zu", res.added,
                 active_frontiers(see_).size(), unobservable);

        plan_next_view();
    }

    /// NBV selection / occlusion handling / path planning loop. Runs until
    /// a flight plan exists, exploration finishes, or the battery dies.
    /// Termination: every failed attempt advances some frontier's attempt
    /// counter, and capped frontiers drop out as unobservable.
    void plan_next_view() {
        while (!done_ && !battery_out_) {
            if (mission_complete(see_)) {
                finish_complete();
                return;
            }
            if (!advance_hover(kViewPlanNominalS)) return;
            const auto selected = select_nbv(see_, est_pose_);
            if (!selected) {
                log_.add("VIEW_PLAN dur=%.9g result=none",
                         kViewPlanNominalS);
                // Every remaining frontier degenerated this pass (their
                // counters advanced); retry until they cap out.
                continue;
            }
            log_.add("VIEW_PLAN dur=%.9g target=%lld x=%.9g y=%.9g z=%.9g "
                     "yaw=%.9g",
                     kViewPlanNominalS,
                     static_cast<long long>(selected->target_frontier),
                     selected->position.x(), selected->position.y(),
                     selected->position.z(), selected->yaw);

            const auto resolved = resolve_occlusion(
                see_, static_cast<std::size_t>(selected->target_frontier),
                *selected);
            if (!resolved) continue;

            if (!plan_to_view(*resolved)) {
                if (battery_out_) return;
                continue;
            }
            return;
        }
    }

    bool plan_to_view(const View& view) {
        PlanState start;
        start.position = est_pose_.translation;
        start.yaw = est_pose_.yaw();
        PlanState goal;
        goal.position = view.position;
        goal.yaw = view.yaw;

        const PlanResult result = plan_path(grid_, start, goal, plan_cfg_);
        const double dur =
            kPathPlanBatchS *
            std::max<double>(
                1.0, std::ceil(static_cast<double>(plan_iterations(result)) /
                               cfg_.plan.batch_size));
        if (!advance_hover(dur)) return false;

        if (std::holds_alternative<NoPath>(result)) {
            const NoPath& np = std::get<NoPath>(result);
            log_.add("PATH_PLAN dur=%.9g result=no_path reason=%s", dur,
                     np.reason == NoPathReason::GoalInvalid
                         ? "goal_invalid"
                         : "budget_exhausted");
            // The frontier stays put; count the failure against it so an
            // unreachable view cannot stall the mission forever.
            record_view_outcome(see_, view, 0);
            return false;
        }

        const PathPlan& plan = std::get<PathPlan>(result);
        waypoints_ = segment_waypoints(plan.states, cfg_.plan.max_waypoint_m);
        wp_index_ = waypoints_.size() > 1 ? 1 : 0;
        current_view_ = view;
        phase_ = Phase::Fly;
        log_.add("PATH_PLAN dur=%.9g result=ok length=%.9g waypoints=%zu "
                 "samples=%zu",
                 dur, plan.length_m, waypoints_.size(), plan.iterations);
        return true;
    }

    static std::size_t plan_iterations(const PlanResult& result) {
        if (std::holds_alternative<PathPlan>(result))
            return std::get<PathPlan>(result).iterations;
        return std::get<NoPath>(result).iterations;
    }

    void finish_complete() {
        std::size_t unobservable = 0;
        for (const SeePoint& p : see_.points)
            if (p.unobservable) ++unobservable;
        status_ = unobservable == 0 ? MissionStatus::Complete
                                    : MissionStatus::CompleteWithWarnings;
        log_.add("FLIGHT_END reason=complete");
        log_.add("MISSION_COMPLETE unobservable=%zu", unobservable);
        done_ = true;
    }

    // ---- relocalization (resume flights) ----

    void process_relocalization_scan(std::int64_t scan_id,
                                     const Pose& gt_pose,
                                     const PointCloud& cloud) {
        PointCloud node_cloud =
            downsample(cloud, cfg_.node_cloud_target_points,
                       derive_seed(master_seed_, kSaltNodeCloud,
                                   static_cast<std::uint64_t>(scan_id)));
        node_cloud.source_scan_id = scan_id;
        ++reloc_attempts_;
        log_.add("RELOC_ATTEMPT scan=%lld",
                 static_cast<long long>(scan_id));

        const auto match = relocalize(graph_, db_, node_cloud, est_pose_,
                                      cfg_.scan_context, cfg_.icp);
        if (match) {
            const Pose new_pose = compose(
                graph_.nodes[match->matched_node].pose, match->relative);
            const auto node_id =
                add_node(graph_, new_pose, node_cloud, true);
            Factor f;
            f.kind = FactorKind::Relocalization;
            f.from_id = match->matched_node;
            f.to_id = *node_id;
            f.relative = match->relative;
            f.weight = cfg_.graph.relocalization_weight;
            add_factor(graph_, f);
            est_pose_ = graph_.nodes.back().pose;
            node_truth_.push_back(NodeTruth{*node_id, now(), gt_pose});
            db_.insert(*node_id,
                       compute_descriptor(node_cloud, cfg_.scan_context));
            submap_valid_ = false;
            optimize_and_propagate();
            est_pose_ = graph_.nodes.back().pose;

            reloc_error_m_ =
                (est_pose_.translation - gt_pose.translation).norm();
            log_.add("RELOC_ACCEPT node=%d matched=%d err=%.9g score=%.9g",
                     *node_id, match->matched_node, reloc_error_m_,
                     match->score);

            const PointCloud thin =
                thin_cloud(cloud, cfg_.see_integration_voxel_m);
            integrate_scan(grid_, transform_cloud(thin, est_pose_),
                           est_pose_.translation);
            current_view_ = View{};
            current_view_.target_frontier = -1;
            phase_ = Phase::AtView;
            pending_view_scan_ = true;
            return;
        }
        if (reloc_attempts_ >= cfg_.relocalization_scan_budget) {
            log_.add("RELOC_TIMEOUT scans=%d", reloc_attempts_);
            log_.add("FLIGHT_END reason=relocalization_timeout");
            status_ = MissionStatus::RelocalizationTimeout;
            done_ = true;
        }
    }

    // ---- main loop ----

    void fly_tick() {
        const PlanState& target = waypoints_[wp_index_];
        PlatformState ctrl = platform_;
        ctrl.position = est_pose_.translation;
        ctrl.yaw = est_pose_.yaw();
        const double dist =
            (target.position - est_pose_.translation).norm();

        if (dist <= cfg_.control.arrival_tolerance_m) {
            apply_command(VelocityCommand{}, dist);
            if (battery_out_) return;
            if (wp_index_ + 1 >= waypoints_.size()) {
                log_.add("ARRIVE x=%.9g y=%.9g z=%.9g",
                         est_pose_.translation.x(),
                         est_pose_.translation.y(),
                         est_pose_.translation.z());
                phase_ = Phase::AtView;
                pending_view_scan_ = true;
            } else {
                log_.add("WAYPOINT i=%zu n=%zu", wp_index_,
                         waypoints_.size());
                // Stop-and-replan toward the unchanged goal view, so
                // obstacles mapped since the last plan are honored.
                const View goal = current_view_;
                if (!plan_to_view(goal) && !battery_out_ && !done_) {
                    phase_ = Phase::AtView;
                    plan_next_view();
                }
            }
            return;
        }
        const VelocityCommand cmd =
            velocity_command(ctrl, target, cfg_.control);
        apply_command(cmd, dist);
    }

    void climb_tick() {
        PlanState target;
        target.position =
            scene_.takeoff.translation + Vec3(0.0, 0.0, kClimbHeight);
        target.yaw = scene_.takeoff.yaw();
        PlatformState ctrl = platform_;
        ctrl.position = est_pose_.translation;
        ctrl.yaw = est_pose_.yaw();
        const double dist =
            (target.position - est_pose_.translation).norm();
        if (dist <= kClimbTolerance) {
            apply_command(VelocityCommand{}, dist);
            if (battery_out_) return;
            if (resuming_ && !graph_.nodes.empty()) {
                phase_ = Phase::Relocalize;
            } else {
                phase_ = Phase::AtView;
                current_view_ = View{};
                current_view_.target_frontier = -1;
                current_view_.position = est_pose_.translation;
                pending_view_scan_ = true;
            }
            return;
        }
        const VelocityCommand cmd = velocity_command(ctrl, target, climb_cfg_);
        apply_command(cmd, dist);
    }

    void run_loop() {
        log_.add("FLIGHT_START flight=%d", flights_);
        while (!done_ && !battery_out_) {
            // Perceive at the tick boundary, then move through the tick.
            if (phase_ != Phase::Climb && scan_tick_due()) {
                process_scan();
                if (done_ || battery_out_) break;
            }
            switch (phase_) {
                case Phase::Climb:
                    climb_tick();
                    break;
                case Phase::Relocalize:
                case Phase::AtView:
                    hover_tick();
                    break;
                case Phase::Fly:
                    fly_tick();
                    break;
            }
        }
        if (battery_out_ && !done_) {
            log_.add("BATTERY remaining=0");
            log_.add("FLIGHT_END reason=battery");
            log_.add("RESUMABLE");
            status_ = MissionStatus::Resumable;
            done_ = true;
        }
    }

    // ---- persistence ----

    void write_artifacts() {
        const fs::path out(cfg_.output_dir);
        fs::create_directories(out);

        const PointCloud map = aggregate_map(graph_);
        save_ply((out / "map.ply").string(), map,
                 PlyFormat::BinaryLittleEndian);

        {
            std::ofstream csv(out / "trajectory.csv");
            if (!csv)
                throw IoError("mission: cannot write trajectory.csv");
            csv << "t,est_x,est_y,est_z,est_yaw,gt_x,gt_y,gt_z,gt_yaw\n";
            char line[320];
            for (const NodeTruth& n : node_truth_) {
                const Pose& est = graph_.nodes[n.id].pose;
                std::snprintf(
                    line, sizeof line,
                    "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", n.t,
                    est.translation.x(), est.translation.y(),
                    est.translation.z(), est.yaw(), n.gt.translation.x(),
                    n.gt.translation.y(), n.gt.translation.z(), n.gt.yaw());
                csv << line;
            }
        }

        {
            std::ofstream logf(out / "mission.log");
            if (!logf) throw IoError("mission: cannot write mission.log");
            for (const std::string& line : log_.lines) logf << line << "\n";
        }

        write_metrics(out.string(), map);
        save_session_state((out / "session").string());
    }

    void write_metrics(const std::string& out_dir, const PointCloud& map) {
        std::ofstream m(fs::path(out_dir) / "metrics.txt");
        if (!m) throw IoError("mission: cannot write metrics.txt");
        char line[160];
        const auto put = [&](const char* key, double v) {
            std::snprintf(line, sizeof line, "%s=%.9g\n", key, v);
            m << line;
        };
        m << "status=" << to_string(status_) << "\n";
        put("sim_time_s", now());
        put("nodes", static_cast<double>(graph_.nodes.size()));
        put("loop_closures", loop_closures_);
        put("views_visited", views_visited_);
        put("map_points", static_cast<double>(map.size()));
        put("see_points", static_cast<double>(see_.points.size()));

        double cov = 0.0;
        if (!map.empty()) {
            const PointCloud reference =
                sample_scene_surface(scene_, 100.0, 0);
            if (!reference.empty()) {
                cov = coverage(map, reference, 0.2).fraction;
                put("coverage_fraction_0p2m", cov);
                const AccuracyReport acc = accuracy(reference, map, 1.0);
                put("accuracy_mean_m", acc.mean_error_m);
                put("accuracy_matched_fraction", acc.matched_fraction);
            }
        }
        coverage_fraction_ = cov;

        if (node_truth_.size() >= 2) {
            std::vector<Pose> est, gt;
            for (const NodeTruth& n : node_truth_) {
                est.push_back(graph_.nodes[n.id].pose);
                gt.push_back(n.gt);
            }
            put("trajectory_rmse_m", trajectory_error(est, gt));
        }
    }

    void save_session_state(const std::string& dir) {
        fs::create_directories(dir);
        save_session(graph_, dir);
        export_state(see_, (fs::path(dir) / "see.bin").string());
        db_.save((fs::path(dir) / "descriptors").string());
        MissionConfig stored = cfg_;
        stored.scene_path = fs::absolute(cfg_.scene_path).string();
        save_mission_config(stored,
                            (fs::path(dir) / "config.json").string());

        json doc;
        doc["format_version"] = 1;
        doc["flights"] = flights_;
        doc["master_seed"] = master_seed_;
        doc["scan_counter"] = scan_counter_;
        doc["complete"] = mission_complete(see_);
        doc["status"] = to_string(status_);
        json truth = json::array();
        for (const NodeTruth& n : node_truth_) {
            truth.push_back({n.id, n.t, n.gt.translation.x(),
                             n.gt.translation.y(), n.gt.translation.z(),
                             n.gt.yaw()});
        }
        doc["node_truth"] = truth;
        std::ofstream out(fs::path(dir) / "mission.json");
        if (!out) throw IoError("mission: cannot write mission.json");
        out << doc.dump(2) << "\n";
    }

    void load_session_state(const std::string& dir) {
        graph_ = load_session(dir);
        graph_.config = cfg_.graph;
        db_ = DescriptorDatabase::load(
            (fs::path(dir) / "descriptors").string());
        see_ = import_state((fs::path(dir) / "see.bin").string(), see_cfg_);

        std::ifstream in(fs::path(dir) / "mission.json");
        if (!in) throw IoError("mission: missing mission.json in " + dir);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ParseError("mission: bad mission.json: " +
                             std::string(e.what()));
        }
        if (doc.at("format_version").get<int>() != 1)
            throw FormatVersionMismatch(
                "mission: unsupported mission.json version");
        flights_ = doc.at("flights").get<int>();
        master_seed_ = doc.at("master_seed").get<std::uint64_t>();
        scan_counter_ = doc.at("scan_counter").get<std::int64_t>();
        for (const auto& row : doc.at("node_truth")) {
            NodeTruth n;
            n.id = row.at(0).get<int>();
            n.t = row.at(1).get<double>();
            n.gt = Pose::from_xyz_yaw(
                Vec3(row.at(2).get<double>(), row.at(3).get<double>(),
                     row.at(4).get<double>()),
                row.at(5).get<double>());
            node_truth_.push_back(n);
        }

        // The planner world model restarts from the stored registered map.
        grid_ = OccupancyGrid(cfg_.grid_voxel_m);
        for (const GraphNode& n : graph_.nodes)
            integrate_scan(grid_, transform_cloud(n.cloud, n.pose),
                           n.pose.translation);
    }

    double coverage_fraction_ = 0.0;

    MissionOutcome outcome() const {
        MissionOutcome o;
        o.status = status_;
        o.sim_time_s = tick_ * kTickDt;
        o.nodes = static_cast<int>(graph_.nodes.size());
        o.loop_closures = loop_closures_;
        o.views_visited = views_visited_;
        o.coverage_fraction = coverage_fraction_;
        return o;
    }
};

}  // namespace

MissionOutcome run_mission(const MissionConfig& cfg) {
    if (cfg.output_dir.empty())
        throw ValidationError("mission: output_dir not set");
    Runner runner(cfg, false);
    runner.master_seed_ = cfg.seed;
    runner.log_.add("MISSION_START seed=%llu flight=1",
                    static_cast<unsigned long long>(cfg.seed));
    runner.init_flight(cfg.seed);
    runner.run_loop();
    runner.write_artifacts();
    MissionOutcome o = runner.outcome();
    o.reloc_error_m = runner.reloc_error_m_;
    return o;
}

MissionOutcome resume_mission(const std::string& session_dir,
                              const std::string& output_dir,
                              std::uint64_t seed_override,
                              bool has_seed_override) {
    const fs::path session(session_dir);
    MissionConfig cfg =
        load_mission_config((session / "config.json").string());
    cfg.output_dir = output_dir;

    Runner runner(cfg, true);
    runner.load_session_state(session_dir);

    if (mission_complete(runner.see_) && !runner.graph_.nodes.empty()) {
        std::size_t unobservable = 0;
        for (const SeePoint& p : runner.see_.points)
            if (p.unobservable) ++unobservable;
        runner.status_ = unobservable == 0
                             ? MissionStatus::Complete
                             : MissionStatus::CompleteWithWarnings;
        runner.log_.add("MISSION_START seed=%llu flight=%d",
                        static_cast<unsigned long long>(runner.master_seed_),
                        runner.flights_);
        runner.log_.add("MISSION_COMPLETE unobservable=%zu", unobservable);
        runner.write_artifacts();
        MissionOutcome o = runner.outcome();
        o.reloc_error_m = 0.0;
        return o;
    }

    const std::uint64_t flight_seed =
        has_seed_override
            ? seed_override
            : derive_seed(runner.master_seed_, kSaltFlight,
                          static_cast<std::uint64_t>(runner.flights_));
    runner.flights_ += 1;
    runner.graph_.begin_new_session();
    runner.log_.add("MISSION_START seed=%llu flight=%d",
                    static_cast<unsigned long long>(flight_seed),
                    runner.flights_);
    runner.init_flight(flight_seed);
    runner.run_loop();
    runner.write_artifacts();
    MissionOutcome o = runner.outcome();
    o.reloc_error_m = runner.reloc_error_m_;
    return o;
}

}  // namespace aeromap
