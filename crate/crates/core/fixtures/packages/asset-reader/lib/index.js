const fs = require('fs')
const path = require('path')

function resolveAsset(root, name) {
  const clean = name.replace(/^\/+/, '')
  return path.join(root, clean)
}

function readAsset(root, name) {
  const full = resolveAsset(root, name)
  return fs.readFileSync(full, 'utf8')
}

function listAssets(root) {
  return fs.readdirSync(root).filter((f) => !f.startsWith('.'))
}

module.exports = { readAsset, resolveAsset, listAssets }
