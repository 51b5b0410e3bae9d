import { ServiceClient } from "./api.js";
import { mountConsole } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl =
  params.get("service") ??
  localStorage.getItem("printid.serviceUrl") ??
  "http://127.0.0.1:8321";
localStorage.setItem("printid.serviceUrl", baseUrl);

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
mountConsole(root, new ServiceClient(baseUrl));
