"""One seeded run of a deployment: uploads, request traffic, churn, leases and monitoring."""

from __future__ import annotations

from math import floor
from dataclasses import dataclass, field
from typing import NamedTuple

from .broker import Broker, DeploymentKind
from .config import ScenarioConfig
from .economics import (
    DemandSupplySnapshot,
    SpotMarket,
    VirtualCurrencyLedger,
    compute_reward,
    credit_on_lease_close,
    update_spot_floor,
)
from .engine import EventKind, EventQueue, derive_seed, derive_stream, ms_to_us, s_to_us
from .network import CLOUD_ID, LatencyTier, Topology, classify, sample_one_way_latency, transfer_time
from .nodes import (
    LeaseStatus,
    NodeKind,
    NodeState,
    next_churn_transition,
    on_disconnect,
    on_reconnect,
    open_lease,
    serve,
)
from .workload import Request, RequestOutcome, generate_arrivals

ARRIVAL = EventKind.ARRIVAL
SEND_COMPLETE = EventKind.SEND_COMPLETE
SERVICE_COMPLETE = EventKind.SERVICE_COMPLETE
CHURN_DOWN = EventKind.CHURN_DOWN
CHURN_UP = EventKind.CHURN_UP
LEASE_EXPIRY = EventKind.LEASE_EXPIRY
MONITOR_TICK = EventKind.MONITOR_TICK


class _Upload(NamedTuple):
    device: str
    node: NodeState
    epoch: int


@dataclass
class RunResult:
    run_index: int
    seed: int
    deployment: DeploymentKind
    upload_ms: list[float]
    outcomes: list[RequestOutcome]
    generated: int
    disconnects: int
    leases_opened: int
    lease_counts: dict
    credited: float
    balances: dict[str, float]
    # (time_us, zone_id, reward_rate, spot_floor)
    rewards: list[tuple[int, int, float, float]] = field(default_factory=list)

    @property
    def retries(self) -> int:
        return sum(o.retries for o in self.outcomes)


def device_ids(cfg: ScenarioConfig) -> list[str]:
    return [f"dev-z{z}-{j}" for z in range(cfg.zones) for j in range(cfg.devices_per_zone)]


class Simulation:
    """Builds the topology for ``cfg.deployment`` and plays one run on it.

    With ``trace=True`` every processed event, every service start and every
    churn transition is logged for post-hoc invariant checks.
    """

    def __init__(self, cfg: ScenarioConfig, run_index: int = 0, seed: int | None = None, trace: bool = False):
        self.cfg = cfg
        self.run_index = run_index
        self.seed = derive_seed(cfg.master_seed, f"run{run_index}") if seed is None else seed
        self.horizon = s_to_us(cfg.horizon_s)
        self.queue = EventQueue()
        self.model = cfg.latency.model()
        self.bandwidth = cfg.latency.bandwidth_bytes_per_s
        self.task = cfg.task.spec()
        self.churn = cfg.churn.process()

        self.rng_latency = derive_stream(self.seed, "latency")
        self.rng_arrivals = derive_stream(self.seed, "arrivals")
        self.rng_attach = derive_stream(self.seed, "attach")
        self.rng_policy = derive_stream(self.seed, "policy")

        eco = cfg.economics
        self.topology = Topology()
        self.broker = Broker(
            self.topology,
            cfg.effective_policy,
            self.rng_policy,
            require_lease=eco.gates_supply and cfg.deployment is DeploymentKind.OEC_CLOUD,
        )
        self.devices = device_ids(cfg)
        for dev in self.devices:
            self.topology.add(dev, int(dev.split("-")[1][1:]))
        self._build_pool()

        self.ledger = VirtualCurrencyLedger()
        self.markets = {z: SpotMarket(eco.base_floor, eco.base_floor) for z in range(cfg.zones)}
        self.rewards: list[tuple[int, int, float, float]] = []
        self.requests: list[Request] = []
        self.outcomes: list[RequestOutcome] = []
        self.upload_done: dict[str, int] = {}
        self.disconnects = 0
        self._tier_cache: dict[tuple[str, str], LatencyTier] = {}
        self._last_busy: dict[str, int] = {}
        self._churn_rng = {}
        self._next_arrival: dict[str, int] = {}
        self._request_log = self.broker.db.request_log
        # The request path inlines sample_one_way_latency with these cached values.
        self._tier_params = [self.model.params(t) for t in LatencyTier]
        self._normal = self.rng_latency.normal
        nodes = list(self.broker.nodes.values())
        self._tiers = {dev: [self.tier(dev, n) for n in nodes] for dev in self.devices}
        task, bw = self.task, self.bandwidth
        self._xfer_b = transfer_time(task.payload_b_bytes, bw)
        self._xfer_ab = transfer_time(task.payload_a_bytes + task.payload_b_bytes, bw)
        self._xfer_x = transfer_time(task.payload_x_bytes, bw)
        self.trace = [] if trace else None
        self.service_log = [] if trace else None
        self.churn_log = [] if trace else None

    # -- construction ------------------------------------------------------

    def _build_pool(self) -> None:
        cfg, broker = self.cfg, self.broker
        service = cfg.service
        broker.register_and_profile(CLOUD_ID, NodeKind.CLOUD_DATACENTER, None, service.profile(servers=None))
        kind = None
        if cfg.deployment is DeploymentKind.DEDICATED_FOGS:
            kind = NodeKind.DEDICATED_FOG
            for z in range(cfg.zones):
                for k in range(cfg.fogs_per_zone):
                    broker.register_and_profile(f"fog-z{z}-{k}", kind, z, service.profile())
        elif cfg.deployment is DeploymentKind.OEC_CLOUD:
            kind = NodeKind.PARTICIPANT_DEVICE
            for z in range(cfg.zones):
                for k in range(cfg.oec_participants_per_zone):
                    broker.register_and_profile(
                        f"oec-z{z}-{k}", kind, z, service.profile(), mean_uptime_s=cfg.churn.mean_uptime_s
                    )
        self.attachment = broker.attach_devices(self.devices, self.rng_attach, kind)
        self.participants = [n for n in broker.nodes.values() if n.kind is NodeKind.PARTICIPANT_DEVICE]

    def tier(self, device: str, node: NodeState) -> LatencyTier:
        key = (device, node.node_id)
        t = self._tier_cache.get(key)
        if t is None:
            t = self._tier_cache[key] = classify(device, node.node_id, self.topology)
        return t

    def _one_way_us(self, device: str, node: NodeState, payload_bytes: int) -> int:
        lat = sample_one_way_latency(self.model, self.tier(device, node), self.rng_latency)
        return ms_to_us(lat + transfer_time(payload_bytes, self.bandwidth))

    # -- economics ---------------------------------------------------------

    def snapshot(self, zone: int, now: int) -> DemandSupplySnapshot:
        supply = sum(
            1000.0 / n.profile.solve_time_ms for n in self.participants if n.zone_id == zone and n.connected
        )
        demand = self.cfg.devices_per_zone * self.cfg.arrival_rate_per_s
        return DemandSupplySnapshot(zone, supply, demand, now)

    def _try_lease(self, node: NodeState, now: int):
        eco = self.cfg.economics
        quote = compute_reward(self.snapshot(node.zone_id, now), eco.base_rate)
        if eco.gates_supply and quote.rate < eco.reserve_price:
            return None
        db = self.broker.db
        lease = open_lease(node, eco.lease_duration_s * 1000.0, quote.rate, now, len(db.leases), self.queue)
        db.leases.append(lease)
        db.records[node.node_id].lease = lease
        return lease

    def _close_lease(self, lease) -> None:
        credit_on_lease_close(self.ledger, lease)

    # -- start-up ----------------------------------------------------------

    def start(self) -> None:
        q = self.queue
        cfg = self.cfg
        self._arrivals = {
            dev: generate_arrivals(cfg.arrival_rate_per_s, cfg.horizon_s, self.rng_arrivals) for dev in self.devices
        }
        for node in self.participants:
            self._try_lease(node, 0)
            if cfg.churn.enabled:
                rng = self._churn_rng[node.node_id] = derive_stream(self.seed, f"churn/{node.node_id}")
                up_for = s_to_us(next_churn_transition(self.churn, True, rng))
                if up_for < self.horizon:
                    q.schedule(up_for, CHURN_DOWN, node)
        q.schedule(0, MONITOR_TICK)
        for dev in self.devices:
            self._send_upload(dev, self.broker.nodes[self.attachment[dev]], 0)

    def _send_upload(self, dev: str, node: NodeState, now: int) -> None:
        if not node.connected:
            node = self.broker.select_target(dev, exclude=node)
        arrive = now + self._one_way_us(dev, node, self.task.payload_a_bytes)
        self.queue.schedule(arrive, SEND_COMPLETE, _Upload(dev, node, node.epoch))

    def _upload_arrived(self, up: _Upload, now: int) -> None:
        node = up.node
        if not node.connected or node.epoch != up.epoch:
            self._send_upload(up.device, self.broker.select_target(up.device, exclude=node), now)
            return
        node.has_a.add(up.device)
        done = now + self._one_way_us(up.device, node, 0)
        self.upload_done[up.device] = done
        self._next_arrival[up.device] = 0
        self._schedule_arrival(up.device)

    def _schedule_arrival(self, dev: str) -> None:
        # One pending arrival per device keeps the heap small.
        i = self._next_arrival[dev]
        times = self._arrivals[dev]
        if i < len(times):
            t = times[i] + self.upload_done[dev]
            if t < self.horizon:
                self._next_arrival[dev] = i + 1
                self.queue.push(t, ARRIVAL, dev)

    # -- request path ------------------------------------------------------

    def submit(self, device: str, now: int) -> Request:
        req = Request(len(self.requests), device, now)
        self.requests.append(req)
        self.dispatch(req, self.broker.select_target(device), now)
        return req

    def _arrival(self, device: str, now: int) -> None:
        self.submit(device, now)
        self._schedule_arrival(device)

    def dispatch(self, req: Request, node: NodeState, now: int) -> None:
        req.attempt += 1
        req.history.append(node.node_id)
        req.node = node
        node.queue[req.request_id] = req
        self._request_log.append((now, req.request_id, node.node_id, req.attempt))
        # A travels with b when the node has no copy.
        xfer = self._xfer_b if req.device in node.has_a else self._xfer_ab
        mean, sd = self._tier_params[self._tiers[req.device][node.index]]
        normal = self._normal
        while True:
            x = mean + sd * normal()
            if x >= 0.0:
                break
        self.queue.push(now + floor((x + xfer) * 1000.0 + 0.5), SEND_COMPLETE, (req, req.attempt))

    def _request_arrived(self, req: Request, now: int) -> None:
        node = req.node
        node.has_a.add(req.device)
        if self.service_log is not None:
            self.service_log.append(
                (now, node.node_id, req.device, req.device not in node.has_factorization, req.request_id, node.busy_until)
            )
        done = serve(node, req.device, now)
        self.queue.push(done, SERVICE_COMPLETE, (req, req.attempt))

    def _request_served(self, req: Request, now: int) -> None:
        node = req.node
        del node.queue[req.request_id]
        tier = self._tiers[req.device][node.index]
        mean, sd = self._tier_params[tier]
        normal = self._normal
        while True:
            x = mean + sd * normal()
            if x >= 0.0:
                break
        completed = now + floor((x + self._xfer_x) * 1000.0 + 0.5)
        req.done = True
        self.outcomes.append(
            RequestOutcome(
                req.request_id, req.device, req.created_at, completed, node.node_id, tier, len(req.history) - 1
            )
        )

    # -- churn, leases, monitoring ----------------------------------------

    def _disconnect(self, node: NodeState, now: int) -> None:
        lease = node.lease
        was_active = lease is not None and lease.status is LeaseStatus.ACTIVE
        pending = list(node.queue.values())
        on_disconnect(node, now)
        self.disconnects += 1
        if was_active:
            self._close_lease(lease)
        if self.churn_log is not None:
            self.churn_log.append((now, node.node_id, False))
        for req in pending:
            self.dispatch(req, self.broker.handle_failure(req, node, now), now)
        down_for = s_to_us(next_churn_transition(self.churn, False, self._churn_rng[node.node_id]))
        if now + down_for < self.horizon:
            self.queue.schedule(now + down_for, CHURN_UP, node)

    def _reconnect(self, node: NodeState, now: int) -> None:
        on_reconnect(node, now)
        if self.churn_log is not None:
            self.churn_log.append((now, node.node_id, True))
        self._try_lease(node, now)
        up_for = s_to_us(next_churn_transition(self.churn, True, self._churn_rng[node.node_id]))
        if now + up_for < self.horizon:
            self.queue.schedule(now + up_for, CHURN_DOWN, node)

    def _lease_expired(self, lease, now: int) -> None:
        if lease.status is not LeaseStatus.ACTIVE:
            return
        lease.expire(now)
        self._close_lease(lease)
        node = self.broker.nodes[lease.node_id]
        if node.connected and now < self.horizon:
            self._try_lease(node, now)

    def _monitor(self, now: int) -> None:
        cfg = self.cfg
        interval = s_to_us(cfg.monitor_interval_s)
        for node in self.broker.nodes.values():
            last = self._last_busy.get(node.node_id, 0)
            util = min(1.0, (node.busy_us - last) / interval)
            self._last_busy[node.node_id] = node.busy_us
            self.broker.record_monitoring_sample(node.node_id, now, util, node.connected)
        if cfg.deployment is DeploymentKind.OEC_CLOUD:
            eco = cfg.economics
            for z in range(cfg.zones):
                snap = self.snapshot(z, now)
                rate = compute_reward(snap, eco.base_rate).rate
                spot = update_spot_floor(self.markets[z], snap, eco.floor_alpha)
                self.rewards.append((now, z, rate, spot))
            if eco.gates_supply:
                for node in self.participants:
                    if node.connected and (node.lease is None or node.lease.status is not LeaseStatus.ACTIVE):
                        self._try_lease(node, now)
        if now + interval < self.horizon:
            self.queue.schedule(now + interval, MONITOR_TICK)

    # -- main loop ---------------------------------------------------------

    def step(self) -> bool:
        entry = self.queue.pop_raw()
        if entry is None:
            return False
        self._handle(*entry)
        return True

    def _handle(self, now: int, seq: int, kind: EventKind, target) -> None:
        if self.trace is not None:
            self.trace.append((now, seq, int(kind), _describe(target)))
        if kind is SEND_COMPLETE:
            if type(target) is _Upload:
                self._upload_arrived(target, now)
            else:
                req, attempt = target
                if req.attempt == attempt:
                    self._request_arrived(req, now)
        elif kind is SERVICE_COMPLETE:
            req, attempt = target
            if req.attempt == attempt:
                self._request_served(req, now)
        elif kind is ARRIVAL:
            self._arrival(target, now)
        elif kind is CHURN_DOWN:
            self._disconnect(target, now)
        elif kind is CHURN_UP:
            self._reconnect(target, now)
        elif kind is LEASE_EXPIRY:
            self._lease_expired(target, now)
        elif kind is MONITOR_TICK:
            self._monitor(now)

    def run(self) -> RunResult:
        self.start()
        pop = self.queue.pop_raw
        handle = self._handle
        while (entry := pop()) is not None:
            handle(*entry)
        return self.result()

    def result(self) -> RunResult:
        counts = self.broker.db.lease_counts()
        return RunResult(
            run_index=self.run_index,
            seed=self.seed,
            deployment=self.cfg.deployment,
            upload_ms=[(self.upload_done[d]) / 1000.0 for d in self.devices if d in self.upload_done],
            outcomes=sorted(self.outcomes, key=lambda o: o.request_id),
            generated=len(self.requests),
            disconnects=self.disconnects,
            leases_opened=len(self.broker.db.leases),
            lease_counts={s.value: c for s, c in counts.items()},
            credited=self.ledger.total_balance,
            balances=dict(self.ledger.balances),
            rewards=list(self.rewards),
        )


def _describe(target):
    if target is None:
        return None
    if isinstance(target, str):
        return target
    if isinstance(target, NodeState):
        return target.node_id
    if isinstance(target, _Upload):
        return ("upload", target.device, target.node.node_id)
    if isinstance(target, tuple):
        return ("request", target[0].request_id, target[1])
    return ("lease", target.lease_id)


def run_request_lifecycle(sim: Simulation, device: str, now: int | None = None) -> RequestOutcome:
    """Issue one request from ``device`` at ``now`` and advance ``sim`` until it is answered."""
    if now is not None:
        while (t := sim.queue.peek_time()) is not None and t <= now:
            sim.step()
        sim.queue.advance_to(now)
    req = sim.submit(device, sim.queue.now)
    while not req.done:
        if not sim.step():
            raise RuntimeError(f"event queue drained before request {req.request_id} finished")
    return next(o for o in reversed(sim.outcomes) if o.request_id == req.request_id)
