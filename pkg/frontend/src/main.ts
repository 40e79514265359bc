import { HttpReviewApi } from "./api.js";
import { ReviewApp } from "./app.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
const params = new URLSearchParams(window.location.search);
const reviewer = params.get("reviewer") ?? "reviewer";
const app = new ReviewApp(root, new HttpReviewApi(), reviewer);
void app.start();
