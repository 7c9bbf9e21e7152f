import { ApiClient } from "./api.js";
import { RatingApp } from "./app.js";

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) return;
  const params = new URLSearchParams(window.location.search);
  const manifest = params.get("manifest");
  const rater = params.get("rater");
  if (!manifest || !rater) {
    root.innerHTML =
      "<p>Pass <code>?manifest=PATH&rater=ID</code> (and optional <code>seed</code>) in the URL.</p>";
    return;
  }
  const seed = params.get("seed");
  const app = new RatingApp(root, new ApiClient(""), window.localStorage);
  window.addEventListener("online", () => app.render());
  app
    .start(manifest, rater, seed === null ? undefined : Number(seed))
    .catch((err) => {
      root.innerHTML = `<p class="error">failed to start: ${String(err)}</p>`;
    });
});
