import init, { simplexCentroids, divergences, adaptationDemo } from "./pkg/nle_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];
const REGION = ["#c6dbef", "#fcbba1", "#c7e9c0"];
const status = document.getElementById("status");

// Triangle corners for classes 0, 1, 2.
const simplex = document.getElementById("simplex");
const sctx = simplex.getContext("2d");
const V = [[210, 20], [20, 350], [400, 350]];
let points = [];

function toXY(p) {
  return [0, 1].map(k => p[0] * V[0][k] + p[1] * V[1][k] + p[2] * V[2][k]);
}

function toBary(x, y) {
  const [[x1, y1], [x2, y2], [x3, y3]] = V;
  const det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3);
  const a = ((y2 - y3) * (x - x3) + (x3 - x2) * (y - y3)) / det;
  const b = ((y3 - y1) * (x - x3) + (x1 - x3) * (y - y3)) / det;
  return [a, b, 1 - a - b];
}

function dot(ctx, [x, y], r, color) {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

function fmt(v) {
  return v.toFixed(4);
}

function drawSimplex() {
  sctx.clearRect(0, 0, simplex.width, simplex.height);
  sctx.strokeStyle = "#888";
  sctx.beginPath();
  sctx.moveTo(...V[0]);
  sctx.lineTo(...V[1]);
  sctx.lineTo(...V[2]);
  sctx.closePath();
  sctx.stroke();
  ["class 0", "class 1", "class 2"].forEach((t, i) => {
    sctx.fillStyle = "#444";
    sctx.fillText(t, V[i][0] + (i === 0 ? 8 : i === 1 ? -10 : -30), V[i][1] + (i === 0 ? 4 : 20));
  });
  points.forEach(p => dot(sctx, toXY(p), 2.5, "#555"));

  const table = document.getElementById("centroid-table");
  if (points.length === 0) {
    table.innerHTML = "";
    return;
  }
  const c = simplexCentroids(new Float64Array(points.flat()));
  let html = "<tr><th>centroid</th><th>e0</th><th>e1</th><th>e2</th></tr>";
  ["L2", "KL", "SKL"].forEach((name, k) => {
    const e = Array.from(c.slice(3 * k, 3 * k + 3));
    dot(sctx, toXY(e), 6, COLORS[k]);
    html += `<tr><td style="color:${COLORS[k]}">${name}</td>${e.map(v => `<td>${fmt(v)}</td>`).join("")}</tr>`;
  });
  table.innerHTML = html;
}

simplex.addEventListener("click", ev => {
  const r = simplex.getBoundingClientRect();
  const p = toBary(ev.clientX - r.left, ev.clientY - r.top);
  if (p.every(v => v > 0)) {
    points.push(p);
    drawSimplex();
  }
});

document.getElementById("clear").onclick = () => {
  points = [];
  drawSimplex();
};

document.getElementById("sample").onclick = () => {
  // softmax of noisy logits around a confident class-0 posterior
  points = [];
  for (let i = 0; i < 40; i++) {
    const z = [3, 0.5, 0].map(m => m + 4 * (Math.random() - 0.5));
    const m = Math.max(...z);
    const e = z.map(v => Math.exp(v - m));
    const s = e.reduce((a, b) => a + b);
    points.push(e.map(v => v / s));
  }
  drawSimplex();
};

function parseDist(id) {
  return new Float64Array(document.getElementById(id).value.split(",").map(Number));
}

function updateDivergences() {
  const table = document.getElementById("div-table");
  try {
    const d = divergences(parseDist("p"), parseDist("q"));
    const names = ["KL(p‖q)", "KL(q‖p)", "SKL(p, q)", "‖p − q‖²"];
    table.innerHTML = names.map((n, i) => `<tr><td>${n}</td><td>${fmt(d[i])}</td></tr>`).join("");
  } catch (e) {
    table.innerHTML = `<tr><td class="err">${e.message ?? e}</td></tr>`;
  }
}

function drawGrid(id, grid, r) {
  const canvas = document.getElementById(id);
  const ctx = canvas.getContext("2d");
  const n = r.grid_size;
  const cell = canvas.width / n;
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      ctx.fillStyle = REGION[grid[i * n + j]];
      ctx.fillRect(j * cell, i * cell, cell + 1, cell + 1);
    }
  }
  const [xmin, xmax, ymin, ymax] = r.bounds;
  r.adapt.forEach(([x, y, label]) => {
    const px = ((x - xmin) / (xmax - xmin)) * canvas.width;
    const py = ((ymax - y) / (ymax - ymin)) * canvas.height;
    dot(ctx, [px, py], 3, COLORS[label]);
  });
}

function runDemo() {
  status.textContent = "training...";
  // let the status line paint before the blocking call
  setTimeout(() => {
    try {
      const r = JSON.parse(adaptationDemo(
        Number(document.getElementById("rot").value),
        Number(document.getElementById("tr").value),
        Number(document.getElementById("seed").value),
      ));
      drawGrid("grid-oh", r.one_hot_grid, r);
      drawGrid("grid-nle", r.nle_skl_grid, r);
      const rows = [
        ["source (train)", r.source_error],
        ["unadapted", r.unadapted_error],
        ["one-hot", r.one_hot_error],
        ["NLE-SKL", r.nle_skl_error],
      ];
      let html = "<tr><th>model</th><th>error</th></tr>";
      html += rows.map(([n, v]) => `<tr><td>${n}</td><td>${fmt(v)}</td></tr>`).join("");
      html += "<tr><th>l-vector</th><th></th></tr>";
      html += r.codebook.map((e, c) => `<tr><td>class ${c}</td><td>${e.map(fmt).join(" ")}</td></tr>`).join("");
      document.getElementById("demo-table").innerHTML = html;
      status.textContent = "";
    } catch (e) {
      status.innerHTML = `<span class="err">${e.message ?? e}</span>`;
    }
  }, 10);
}

await init();
drawSimplex();
updateDivergences();
document.getElementById("p").oninput = updateDivergences;
document.getElementById("q").oninput = updateDivergences;
document.getElementById("run").onclick = runDemo;
