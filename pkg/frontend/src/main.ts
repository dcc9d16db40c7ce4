// Browser entry: three.js point cloud over the websocket stream, orbit
// camera steering the server's level of detail, HUD with live stats.

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

import { FieldMirror } from "./mirror.js";
import { StreamSession, CycleStats, connectWebSocket } from "./session.js";
import { fillColors, cssColor, ColorScale, DEFAULT_SCALE } from "./colors.js";
import { MODE_FULL } from "./protocol.js";

const params = new URLSearchParams(window.location.search);
const streamHost = params.get("host") ?? window.location.host;
const scale: ColorScale = {
  tmin: numberParam("tmin", DEFAULT_SCALE.tmin),
  tmax: numberParam("tmax", DEFAULT_SCALE.tmax),
};

function numberParam(name: string, fallback: number): number {
  const raw = params.get(name);
  if (raw === null) return fallback;
  const parsed = Number(raw);
  return Number.isFinite(parsed) ? parsed : fallback;
}

// room x -> scene X, room height z -> scene Y (up), room y -> scene Z
function roomToScene(out: Float32Array, positions: Float32Array): Float32Array {
  for (let k = 0; k < positions.length / 3; k++) {
    out[3 * k] = positions[3 * k];
    out[3 * k + 1] = positions[3 * k + 2];
    out[3 * k + 2] = positions[3 * k + 1];
  }
  return out;
}

const renderer = new THREE.WebGLRenderer({ antialias: true });
renderer.setPixelRatio(window.devicePixelRatio);
renderer.setSize(window.innerWidth, window.innerHeight);
document.body.appendChild(renderer.domElement);

const scene = new THREE.Scene();
scene.background = new THREE.Color(0x10141a);

const camera = new THREE.PerspectiveCamera(
  55, window.innerWidth / window.innerHeight, 0.01, 500);
camera.position.set(6, 4, 7);

const controls = new OrbitControls(camera, renderer.domElement);
controls.enableDamping = true;

const hud = document.createElement("div");
hud.id = "hud";
document.body.appendChild(hud);

const legend = document.createElement("div");
legend.id = "legend";
legend.style.background =
  `linear-gradient(to right, ${cssColor(scale.tmin, scale)}, ` +
  `${cssColor((scale.tmin + scale.tmax) / 2, scale)}, ${cssColor(scale.tmax, scale)})`;
const legendLabel = document.createElement("div");
legendLabel.id = "legend-label";
legendLabel.textContent = `${scale.tmin.toFixed(0)} C  to  ${scale.tmax.toFixed(0)} C`;
document.body.appendChild(legend);
document.body.appendChild(legendLabel);

let points: THREE.Points | null = null;
let geometry: THREE.BufferGeometry | null = null;
let roomBox: THREE.LineSegments | null = null;
let lastTickAt = performance.now();
let bytesWindow = 0;
let status = "connecting";

function ensureRoomBox(room: [number, number, number]): void {
  if (roomBox !== null) return;
  const box = new THREE.BoxGeometry(room[0], room[2], room[1]);
  box.translate(room[0] / 2, room[2] / 2, room[1] / 2);
  roomBox = new THREE.LineSegments(
    new THREE.EdgesGeometry(box),
    new THREE.LineBasicMaterial({ color: 0x3a4352 }),
  );
  scene.add(roomBox);
  controls.target.set(room[0] / 2, room[2] / 2, room[1] / 2);
  controls.update();
}

function rebuildPoints(mirror: FieldMirror): void {
  const n = mirror.particleCount;
  if (points !== null) {
    scene.remove(points);
    geometry?.dispose();
    (points.material as THREE.Material).dispose();
  }
  geometry = new THREE.BufferGeometry();
  const pos = roomToScene(new Float32Array(3 * n), mirror.positions);
  geometry.setAttribute("position", new THREE.BufferAttribute(pos, 3));
  geometry.setAttribute(
    "color", new THREE.BufferAttribute(new Float32Array(3 * n), 3));
  const material = new THREE.PointsMaterial({
    size: 0.035, vertexColors: true, sizeAttenuation: true,
  });
  points = new THREE.Points(geometry, material);
  scene.add(points);
}

function recolor(mirror: FieldMirror): void {
  if (geometry === null) return;
  const attr = geometry.getAttribute("color") as THREE.BufferAttribute;
  fillColors(mirror.values, attr.array as Float32Array, scale);
  attr.needsUpdate = true;
}

const session = new StreamSession({
  onCycle: (stats: CycleStats, mirror: FieldMirror) => {
    if (mirror.room !== null) ensureRoomBox(mirror.room);
    if (stats.mode === MODE_FULL || points === null ||
        mirror.particleCount * 3 !== (geometry?.getAttribute("position").count ?? 0) * 3) {
      rebuildPoints(mirror);
    }
    recolor(mirror);
    bytesWindow += stats.bytesCycle;
    status = "streaming";
    updateHud(stats, mirror);
  },
  onError: (err: Error) => {
    status = `protocol error: ${err.message}`;
    scheduleReconnect();
  },
});

function updateHud(stats: CycleStats, mirror: FieldMirror): void {
  const now = performance.now();
  const dt = (now - lastTickAt) / 1000;
  lastTickAt = now;
  const rate = dt > 0 ? bytesWindow / dt / 1024 : 0;
  bytesWindow = 0;
  hud.textContent = [
    status,
    `tick ${stats.tick}`,
    `band ${stats.band}`,
    stats.mode === MODE_FULL ? "full" : `delta (${stats.particleRecords} upd)`,
    `${mirror.particleCount} points`,
    `${rate.toFixed(0)} kB/s`,
  ].join("  |  ");
}

function pushViewpoint(): void {
  session.setViewpoint(
    camera.position.x * 100, camera.position.z * 100, camera.position.y * 100);
}
controls.addEventListener("change", pushViewpoint);

let socket: WebSocket | null = null;
let reconnectDelay = 0.5;
let reconnectTimer: ReturnType<typeof setTimeout> | null = null;

function connect(): void {
  status = "connecting";
  hud.textContent = status;
  const attempt = connectWebSocket(`ws://${streamHost}/stream`, session);
  socket = attempt.socket;
  attempt.ready
    .then(() => {
      reconnectDelay = 0.5;
      pushViewpoint();
    })
    .catch(() => scheduleReconnect());
  socket.onclose = () => scheduleReconnect();
}

function scheduleReconnect(): void {
  if (reconnectTimer !== null) return;
  status = `reconnecting in ${reconnectDelay.toFixed(1)}s`;
  hud.textContent = status;
  socket?.close();
  reconnectTimer = setTimeout(() => {
    reconnectTimer = null;
    reconnectDelay = Math.min(reconnectDelay * 2, 10);
    connect();
  }, reconnectDelay * 1000);
}

window.addEventListener("resize", () => {
  camera.aspect = window.innerWidth / window.innerHeight;
  camera.updateProjectionMatrix();
  renderer.setSize(window.innerWidth, window.innerHeight);
});

function animate(): void {
  requestAnimationFrame(animate);
  controls.update();
  renderer.render(scene, camera);
}

connect();
animate();
