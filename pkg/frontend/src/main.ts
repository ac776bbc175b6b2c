import { ApiClient } from "./api.js";
import { ViewerApp } from "./viewer.js";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  new ViewerApp(root, new ApiClient("")).mount();
});
