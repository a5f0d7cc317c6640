import init, { Market, extract_test_card, test_card_pixels } from "./pkg/semcom_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x, d = 4) => (Number.isFinite(x) ? x.toFixed(d) : "∞");
const CARD = 128;

let market = null;
let eqPrice = null;

function drawCurve(m) {
  const cv = $("curve");
  const g = cv.getContext("2d");
  const pts = m.utility_curve(600);
  const n = pts.length / 3;
  let uMax = 0, dMax = 0;
  for (let i = 0; i < n; i++) {
    uMax = Math.max(uMax, pts[3 * i + 1]);
    dMax = Math.max(dMax, pts[3 * i + 2]);
  }
  const pad = 36, w = cv.width - 2 * pad, h = cv.height - 2 * pad;
  const lo = m.unit_cost, hi = m.price_cap;
  const x = (p) => pad + ((p - lo) / (hi - lo)) * w;
  const yU = (u) => pad + h - (Math.max(u, 0) / (uMax || 1)) * h;
  const yD = (d) => pad + h - (d / (dMax || 1)) * h;
  g.clearRect(0, 0, cv.width, cv.height);
  g.strokeStyle = "#bbb";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#445";
  g.font = "12px system-ui";
  g.fillText(lo.toFixed(1), pad - 8, pad + h + 16);
  g.fillText(hi.toFixed(1), pad + w - 10, pad + h + 16);
  g.fillText(fmt(uMax, 2), 2, pad + 4);
  g.fillText(fmt(dMax, 0) + " MHz", pad + w + 2, pad + 4);
  const line = (col, off, y) => {
    g.strokeStyle = col;
    g.lineWidth = 2;
    g.beginPath();
    for (let i = 0; i < n; i++) {
      const X = x(pts[3 * i]), Y = y(pts[3 * i + off]);
      i ? g.lineTo(X, Y) : g.moveTo(X, Y);
    }
    g.stroke();
  };
  line("#9aa3ad", 2, yD);
  line("#1f5fbf", 1, yU);
  if (eqPrice !== null) {
    g.strokeStyle = "#c62828";
    g.lineWidth = 1.5;
    g.beginPath();
    g.moveTo(x(eqPrice), pad);
    g.lineTo(x(eqPrice), pad + h);
    g.stroke();
  }
}

function solveMarket() {
  const cost = +$("cost").value, users = +$("users").value, cap = +$("cap").value;
  $("cost-v").textContent = cost.toFixed(1);
  $("users-v").textContent = users;
  $("cap-v").textContent = cap;
  try {
    market?.free();
    market = new Market(cost, cap, users);
  } catch (e) {
    market = null;
    $("solution").innerHTML = `<span class="err">${e}</span>`;
    return;
  }
  try {
    const [p, u, total, printed] = market.solve();
    eqPrice = p;
    $("solution").textContent =
      `equilibrium price ${fmt(p)} · provider utility ${fmt(u)} · bandwidth sold ${fmt(total, 2)} MHz · single-capacity formula ${fmt(printed)}`;
  } catch (e) {
    eqPrice = null;
    $("solution").innerHTML = `<span class="err">${e}</span>`;
  }
  const slider = $("price");
  slider.min = cost;
  slider.max = market.price_cap;
  if (eqPrice !== null) slider.value = eqPrice;
  drawCurve(market);
  probePrice();
}

function probePrice() {
  if (!market) return;
  const p = +$("price").value;
  $("price-v").textContent = p.toFixed(2);
  const demands = market.demands(p);
  const ages = market.aosi(p);
  const total = demands.reduce((a, b) => a + b, 0);
  $("probe-summary").textContent =
    `provider utility ${fmt(market.leader_utility(p))} · total demand ${fmt(total, 2)} MHz`;
  const cv = $("bars");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const top = Math.max(...demands, 1e-9);
  const bw = cv.width / demands.length;
  demands.forEach((d, i) => {
    const hgt = (d / top) * (cv.height - 24);
    g.fillStyle = "#1f5fbf";
    g.fillRect(i * bw + 4, cv.height - 18 - hgt, bw - 8, hgt);
    g.fillStyle = "#445";
    g.font = "11px system-ui";
    g.fillText(`u${i + 1}`, i * bw + bw / 2 - 6, cv.height - 4);
  });
  const rows = demands
    .map((d, i) => `<tr><td>${i + 1}</td><td>${fmt(d, 3)}</td><td>${fmt(ages[i], 4)}</td></tr>`)
    .join("");
  $("users-table").innerHTML = `<tr><th>user</th><th>MHz</th><th>age (s)</th></tr>${rows}`;
}

function paint(canvas, bytes, w, h) {
  const off = new OffscreenCanvas(w, h);
  const img = new ImageData(w, h);
  for (let i = 0; i < w * h; i++) {
    img.data.set([bytes[i], bytes[i], bytes[i], 255], 4 * i);
  }
  off.getContext("2d").putImageData(img, 0, 0);
  const g = canvas.getContext("2d");
  g.imageSmoothingEnabled = false;
  g.clearRect(0, 0, canvas.width, canvas.height);
  g.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function extract() {
  const r = +$("rate").value;
  $("rate-v").textContent = r.toFixed(2);
  try {
    const x = extract_test_card(CARD, r);
    paint($("small"), x.pixels(), x.width, x.height);
    paint($("restored"), x.restored(), CARD, CARD);
    $("small-cap").textContent = `extracted ${x.width}×${x.height}`;
    $("fidelity").textContent = `SSIM ${fmt(x.ssim)} · PSNR ${fmt(x.psnr, 2)} dB after restoring to ${CARD}×${CARD}`;
    x.free();
  } catch (e) {
    $("fidelity").innerHTML = `<span class="err">${e}</span>`;
  }
}

await init();
paint($("src"), test_card_pixels(CARD), CARD, CARD);
for (const id of ["cost", "users", "cap"]) $(id).addEventListener("input", solveMarket);
$("price").addEventListener("input", probePrice);
$("rate").addEventListener("input", extract);
solveMarket();
extract();
$("status").textContent = "";
