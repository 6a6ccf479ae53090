import { createApp } from "./app";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = createApp({
  root,
  fetchFn: window.fetch.bind(window),
  storage: window.sessionStorage,
});
void app.start();
